//! Finite-difference checks of every differentiable piece, parameterized by
//! seed. Each check returns the worst relative error it saw.

use macd::model::{stage1_loss, stage1_loss_with, stage2_loss, LossTerms, MacdConfig, MacdParams, MaskMatrix, Stage1Batch};
use macd::nn::{
    bce, bce_grad, grl_backward, grl_forward, leaky_relu, leaky_relu_backward, masked_mse, masked_mse_grad,
    softmax_backward, softmax_rows, BatchNorm, DenseLayer, NamedView, NamedViewMut, Parameters,
};
use ndarray::{Array1, Array2, ArrayD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{numeric_grad_array, numeric_grad_params, rel_error, worst_error};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

fn weighted_sum(w: &Array2<f64>, y: &Array2<f64>) -> f64 {
    (w * y).sum()
}

fn err2(a: &Array2<f64>, n: &Array2<f64>) -> f64 {
    rel_error(a.view().into_dyn(), n.view().into_dyn())
}

pub fn dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut layer = DenseLayer::init(4, 3, &mut r);
    let x = uniform(&mut r, 5, 4, -1.0, 1.0);
    let w = uniform(&mut r, 5, 3, -1.0, 1.0);
    let (grads, dx) = layer.backward(x.view(), w.view());
    let numeric = numeric_grad_params(&mut layer, |l| weighted_sum(&w, &l.forward(x.view()).unwrap()));
    let numeric_x = numeric_grad_array(&x, |x| weighted_sum(&w, &layer.forward(x.view()).unwrap()));
    worst_error(&grads, &numeric).1.max(err2(&dx, &numeric_x))
}

pub fn batchnorm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut bn = BatchNorm::new(3);
    bn.gamma = Array1::from_shape_fn(3, |_| r.random_range(0.5..1.5));
    bn.beta = Array1::from_shape_fn(3, |_| r.random_range(-0.5..0.5));
    let x = uniform(&mut r, 6, 3, -2.0, 2.0);
    let w = uniform(&mut r, 6, 3, -1.0, 1.0);
    let (_, cache) = bn.forward(x.view(), true).unwrap();
    let (grads, dx) = bn.backward(&cache, w.view());
    let numeric = numeric_grad_params(&mut bn, |b| weighted_sum(&w, &b.forward(x.view(), true).unwrap().0));
    let numeric_x = numeric_grad_array(&x, |x| weighted_sum(&w, &bn.forward(x.view(), true).unwrap().0));
    worst_error(&grads, &numeric).1.max(err2(&dx, &numeric_x))
}

pub fn leaky(seed: u64) -> f64 {
    let mut r = rng(seed);
    // Keep inputs off the kink so central differences stay one-sided-free.
    let x = uniform(&mut r, 4, 5, 0.01, 2.0).mapv(|v| if r.random_bool(0.5) { -v } else { v });
    let w = uniform(&mut r, 4, 5, -1.0, 1.0);
    let analytic = leaky_relu_backward(x.view(), w.view(), 0.01);
    let numeric = numeric_grad_array(&x, |x| weighted_sum(&w, &leaky_relu(x.view(), 0.01)));
    err2(&analytic, &numeric)
}

pub fn softmax(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&mut r, 4, 5, -3.0, 3.0);
    let w = uniform(&mut r, 4, 5, -1.0, 1.0);
    let y = softmax_rows(x.view());
    let analytic = softmax_backward(y.view(), w.view());
    let numeric = numeric_grad_array(&x, |x| weighted_sum(&w, &softmax_rows(x.view())));
    err2(&analytic, &numeric)
}

pub fn binary_cross_entropy(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = uniform(&mut r, 1, 8, 0.05, 0.95);
    let y = Array1::from_shape_fn(8, |_| if r.random_bool(0.5) { 1.0 } else { 0.0 });
    let analytic = bce_grad(y.view(), p.row(0)).unwrap().insert_axis(Axis(0));
    let numeric = numeric_grad_array(&p, |p| bce(y.view(), p.row(0)).unwrap());
    err2(&analytic, &numeric)
}

pub fn masked_mse_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x_hat = uniform(&mut r, 4, 6, -1.0, 1.0);
    let x = uniform(&mut r, 4, 6, -1.0, 1.0);
    let mut mask = Array2::from_shape_fn((4, 6), |_| r.random_bool(0.4));
    mask[[0, 0]] = true;
    let analytic = masked_mse_grad(x_hat.view(), x.view(), mask.view()).unwrap();
    let numeric = numeric_grad_array(&x_hat, |xh| masked_mse(xh.view(), x.view(), mask.view()).unwrap().loss);
    err2(&analytic, &numeric)
}

/// Identity forward, so the finite-difference gradient of `sum(w ⊙ grl(x))`
/// is `w`; the backward must return `-alpha * w`.
pub fn grl(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&mut r, 3, 4, -1.0, 1.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    let numeric = numeric_grad_array(&x, |x| weighted_sum(&w, &grl_forward(x.view())));
    let alpha = r.random_range(0.1..2.0);
    let identity = err2(&grl_backward(w.view(), -1.0), &numeric);
    let reversed = err2(&grl_backward(w.view(), alpha), &(numeric * -alpha));
    identity.max(reversed)
}

/// Model small enough for exhaustive finite differences.
pub fn tiny_config(seed: u64) -> MacdConfig {
    MacdConfig {
        latent_dim: 4,
        encoder_hidden: 5,
        decoder_hidden: [5, 4],
        head_hidden: 3,
        seed,
        ..MacdConfig::default()
    }
}

pub struct TinyProblem {
    pub params: MacdParams,
    pub real: Array2<f64>,
    pub sim: Array2<f64>,
    pub mask: MaskMatrix,
    pub y_true: Array2<f64>,
    pub cfg: MacdConfig,
}

pub const TINY_GENES: usize = 6;
pub const TINY_TYPES: usize = 3;

pub fn tiny_problem(seed: u64) -> TinyProblem {
    let cfg = tiny_config(seed);
    let mut r = rng(seed);
    let params = MacdParams::init(TINY_GENES, TINY_TYPES, &cfg, &mut r);
    let real = uniform(&mut r, 5, TINY_GENES, 0.0, 3.0);
    let sim = uniform(&mut r, 5, TINY_GENES, 0.0, 3.0);
    let mask = MaskMatrix::sample(5, TINY_GENES, 0.3, &mut r).unwrap();
    let raw = uniform(&mut r, 5, TINY_TYPES, 0.0, 1.0);
    let y_true = &raw / &raw.sum_axis(Axis(1)).insert_axis(Axis(1));
    TinyProblem {
        params,
        real,
        sim,
        mask,
        y_true,
        cfg,
    }
}

impl TinyProblem {
    pub fn batch(&self) -> Stage1Batch<'_> {
        Stage1Batch {
            real: self.real.view(),
            mask: &self.mask,
            sim: self.sim.view(),
        }
    }
}

/// Stage-1 parameters (encoder, decoder, classifier, discriminator).
pub struct Stage1View(pub MacdParams);
/// Stage-2 parameters (encoder, predictor).
pub struct Stage2View(pub MacdParams);

fn named<'a>(prefix: &str, items: Vec<NamedView<'a>>) -> Vec<NamedView<'a>> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

impl Parameters for Stage1View {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        let p = &self.0;
        let mut out = named("encoder", p.encoder.tensors());
        out.extend(named("decoder", p.decoder.tensors()));
        out.extend(named("classifier", p.classifier.tensors()));
        out.extend(named("discriminator", p.discriminator.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        self.0.stage1_tensors_mut()
    }
}

impl Parameters for Stage2View {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        let p = &self.0;
        let mut out = named("encoder", p.encoder.tensors());
        out.extend(named("predictor", p.predictor.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        self.0.stage2_tensors_mut()
    }
}

/// With the GRL swapped for the identity (`alpha = -1`), the analytic
/// stage-1 gradients are the true gradients of the stage-1 loss.
pub fn stage1_identity(seed: u64) -> f64 {
    let mut prob = tiny_problem(seed);
    prob.cfg.grl_alpha = -1.0;
    let out = stage1_loss(&prob.params, &prob.batch(), &prob.cfg).unwrap();
    let mut view = Stage1View(prob.params.clone());
    let numeric = numeric_grad_params(&mut view, |v| stage1_loss(&v.0, &prob.batch(), &prob.cfg).unwrap().loss);
    worst_error(&out.grads, &numeric).1
}

/// With the GRL active, every gradient is the true gradient except that
/// the discriminator loss reaches the encoder scaled by `-alpha`.
pub fn stage1_reversed(seed: u64) -> f64 {
    let prob = tiny_problem(seed);
    let cfg = &prob.cfg;
    let out = stage1_loss(&prob.params, &prob.batch(), cfg).unwrap();
    let bce_weight = 1.0 - cfg.lambda;
    let mut view = Stage1View(prob.params.clone());
    let rest = numeric_grad_params(&mut view, |v| {
        let o = stage1_loss(&v.0, &prob.batch(), cfg).unwrap();
        cfg.lambda * o.reconstruction + bce_weight * o.classifier
    });
    let disc = numeric_grad_params(&mut view, |v| {
        bce_weight * stage1_loss(&v.0, &prob.batch(), cfg).unwrap().discriminator
    });
    let expected: Vec<(String, ArrayD<f64>)> = rest
        .into_iter()
        .zip(disc)
        .map(|((name, r), (_, d))| {
            let sign = if name.starts_with("encoder") { -cfg.grl_alpha } else { 1.0 };
            (name, r + d * sign)
        })
        .collect();
    worst_error(&out.grads, &expected).1
}

pub fn stage2(seed: u64) -> f64 {
    let prob = tiny_problem(seed);
    let out = stage2_loss(&prob.params, prob.sim.view(), prob.y_true.view()).unwrap();
    let mut view = Stage2View(prob.params.clone());
    let numeric = numeric_grad_params(&mut view, |v| {
        stage2_loss(&v.0, prob.sim.view(), prob.y_true.view()).unwrap().loss
    });
    worst_error(&out.grads, &numeric).1
}

/// Reconstruction-only stage 1 exercises the encoder and decoder alone.
pub fn autoencoder(seed: u64) -> f64 {
    let mut prob = tiny_problem(seed);
    prob.cfg.use_adversarial = false;
    let out = stage1_loss(&prob.params, &prob.batch(), &prob.cfg).unwrap();
    let mut view = Stage1View(prob.params.clone());
    let numeric = numeric_grad_params(&mut view, |v| stage1_loss(&v.0, &prob.batch(), &prob.cfg).unwrap().loss);
    worst_error(&out.grads, &numeric).1
}

/// Encoder gradient of the discriminator term alone, under `alpha`.
pub fn discriminator_encoder_grad(prob: &TinyProblem, alpha: f64) -> Vec<ArrayD<f64>> {
    let cfg = MacdConfig {
        grl_alpha: alpha,
        ..prob.cfg.clone()
    };
    let terms = LossTerms {
        reconstruction: false,
        classifier: false,
        discriminator: true,
    };
    let out = stage1_loss_with(&prob.params, &prob.batch(), &cfg, terms).unwrap();
    out.grads.encoder.tensors().into_iter().map(|(_, t)| t.to_owned()).collect()
}

pub type Check = (&'static str, fn(u64) -> f64);

pub const CHECKS: &[Check] = &[
    ("dense", dense),
    ("batchnorm", batchnorm),
    ("leaky_relu", leaky),
    ("softmax", softmax),
    ("bce", binary_cross_entropy),
    ("masked_mse", masked_mse_check),
    ("grl", grl),
    ("encoder_decoder", autoencoder),
    ("stage1_identity_grl", stage1_identity),
    ("stage1_reversed_grl", stage1_reversed),
    ("stage2", stage2),
];
