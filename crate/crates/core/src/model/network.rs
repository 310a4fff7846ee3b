//! MACD parameters and the two training objectives.
//!
//! Stage 1 trains the encoder, decoder, classifier and discriminator on a
//! masked reconstruction loss plus real-vs-simulated BCE losses; the
//! discriminator sits behind a gradient reversal layer. Stage 2 trains the
//! encoder and predictor against simulated proportions.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::config::MacdConfig;
use super::mask::MaskMatrix;
use crate::error::{Error, Result};
use crate::nn::{
    bce, bce_grad, grl_backward, grl_forward, masked_mse, masked_mse_grad, prefixed, sigmoid_clamped,
    sigmoid_clamped_backward, softmax_backward, softmax_rows, Mlp, MlpCache, MlpGrad, NamedView,
    NamedViewMut, Parameters,
};

/// Every learnable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MacdParams {
    /// genes → encoder_hidden (BN, LeakyReLU) → latent
    pub encoder: Mlp,
    /// latent → hidden (BN, LeakyReLU) → hidden (BN, LeakyReLU) → genes
    pub decoder: Mlp,
    /// latent/2 → head_hidden (LeakyReLU) → 1, sigmoid
    pub classifier: Mlp,
    /// latent/2 → head_hidden (LeakyReLU) → 1, sigmoid, behind the GRL
    pub discriminator: Mlp,
    /// latent → head_hidden (BN, LeakyReLU) → types, softmax
    pub predictor: Mlp,
}

impl MacdParams {
    pub fn init(n_genes: usize, n_types: usize, cfg: &MacdConfig, rng: &mut impl Rng) -> Self {
        let half = cfg.latent_dim / 2;
        let slope = cfg.leaky_slope;
        Self {
            encoder: Mlp::init(&[n_genes, cfg.encoder_hidden, cfg.latent_dim], true, slope, rng),
            decoder: Mlp::init(
                &[cfg.latent_dim, cfg.decoder_hidden[0], cfg.decoder_hidden[1], n_genes],
                true,
                slope,
                rng,
            ),
            classifier: Mlp::init(&[half, cfg.head_hidden, 1], false, slope, rng),
            discriminator: Mlp::init(&[half, cfg.head_hidden, 1], false, slope, rng),
            predictor: Mlp::init(&[cfg.latent_dim, cfg.head_hidden, n_types], true, slope, rng),
        }
    }

    pub fn n_genes(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn n_types(&self) -> usize {
        self.predictor.out_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, x: ArrayView2<f64>, training: bool) -> Result<Array2<f64>> {
        if x.ncols() != self.n_genes() {
            return Err(Error::shape("encoder input", self.n_genes(), x.ncols()));
        }
        Ok(self.encoder.forward(x, training)?.0)
    }

    pub fn decode(&self, h: ArrayView2<f64>, training: bool) -> Result<Array2<f64>> {
        if h.ncols() != self.latent_dim() {
            return Err(Error::shape("decoder input", self.latent_dim(), h.ncols()));
        }
        Ok(self.decoder.forward(h, training)?.0)
    }

    /// Cell-type proportions `softmax(predictor(encoder(x)))`.
    pub fn predict_proportions(&self, x: ArrayView2<f64>, training: bool) -> Result<Array2<f64>> {
        let h = self.encode(x, training)?;
        let (logits, _) = self.predictor.forward(h.view(), training)?;
        Ok(softmax_rows(logits.view()))
    }

    /// All tensors, including batch-norm running statistics, in checkpoint order.
    pub fn state_tensors(&self) -> Vec<NamedView<'_>> {
        let mut out = Vec::new();
        for (name, mlp) in self.components() {
            out.extend(prefixed(name, mlp.state_tensors()));
        }
        out
    }

    pub fn state_tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("encoder", self.encoder.state_tensors_mut()));
        out.extend(prefixed("decoder", self.decoder.state_tensors_mut()));
        out.extend(prefixed("classifier", self.classifier.state_tensors_mut()));
        out.extend(prefixed("discriminator", self.discriminator.state_tensors_mut()));
        out.extend(prefixed("predictor", self.predictor.state_tensors_mut()));
        out
    }

    fn components(&self) -> [(&'static str, &Mlp); 5] {
        [
            ("encoder", &self.encoder),
            ("decoder", &self.decoder),
            ("classifier", &self.classifier),
            ("discriminator", &self.discriminator),
            ("predictor", &self.predictor),
        ]
    }

    /// Parameters stepped in stage 1, ordered like [`Stage1Grads::tensors`].
    pub fn stage1_tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("encoder", self.encoder.tensors_mut()));
        out.extend(prefixed("decoder", self.decoder.tensors_mut()));
        out.extend(prefixed("classifier", self.classifier.tensors_mut()));
        out.extend(prefixed("discriminator", self.discriminator.tensors_mut()));
        out
    }

    /// Parameters stepped in stage 2, ordered like [`Stage2Grads::tensors`].
    pub fn stage2_tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("encoder", self.encoder.tensors_mut()));
        out.extend(prefixed("predictor", self.predictor.tensors_mut()));
        out
    }

    /// Folds the batch statistics of a stage-1 step into the running
    /// estimates, in forward order (real pass, then simulated pass).
    pub fn commit_stage1_stats(&mut self, out: &Stage1Output) {
        self.encoder.update_running_stats(&out.caches.encoder_real);
        if let Some(sim) = &out.caches.encoder_sim {
            self.encoder.update_running_stats(sim);
        }
        self.decoder.update_running_stats(&out.caches.decoder);
    }

    pub fn commit_stage2_stats(&mut self, out: &Stage2Output) {
        self.encoder.update_running_stats(&out.caches.encoder);
        self.predictor.update_running_stats(&out.caches.predictor);
    }
}

/// Splits latent features into the classifier half and the discriminator half.
pub fn split_latent(h: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = h.ncols();
    if !d.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("latent width {d} is odd")));
    }
    Ok((h.slice(s![.., ..d / 2]).to_owned(), h.slice(s![.., d / 2..]).to_owned()))
}

pub fn concat_latent(first: ArrayView2<f64>, second: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(1), &[first, second]).map_err(|e| Error::shape("latent halves", "equal row counts", e))
}

/// Which stage-1 terms contribute to the returned gradients. The loss
/// value always includes every active term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub reconstruction: bool,
    pub classifier: bool,
    pub discriminator: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        reconstruction: true,
        classifier: true,
        discriminator: true,
    };
}

pub struct Stage1Batch<'a> {
    /// Unmasked real spots.
    pub real: ArrayView2<'a, f64>,
    pub mask: &'a MaskMatrix,
    pub sim: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Grads {
    pub encoder: MlpGrad,
    pub decoder: MlpGrad,
    pub classifier: MlpGrad,
    pub discriminator: MlpGrad,
}

impl Parameters for Stage1Grads {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("encoder", self.encoder.tensors()));
        out.extend(prefixed("decoder", self.decoder.tensors()));
        out.extend(prefixed("classifier", self.classifier.tensors()));
        out.extend(prefixed("discriminator", self.discriminator.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        let mut out = Vec::new();
        out.extend(prefixed("encoder", self.encoder.tensors_mut()));
        out.extend(prefixed("decoder", self.decoder.tensors_mut()));
        out.extend(prefixed("classifier", self.classifier.tensors_mut()));
        out.extend(prefixed("discriminator", self.discriminator.tensors_mut()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Caches {
    encoder_real: MlpCache,
    encoder_sim: Option<MlpCache>,
    decoder: MlpCache,
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub loss: f64,
    /// Unweighted reconstruction MSE.
    pub reconstruction: f64,
    /// Unweighted classifier BCE (real + simulated); 0 without adversarial terms.
    pub classifier: f64,
    /// Unweighted discriminator BCE (real + simulated); 0 without adversarial terms.
    pub discriminator: f64,
    /// The reconstruction mask selected no entries.
    pub degenerate_mask: bool,
    pub grads: Stage1Grads,
    caches: Stage1Caches,
}

/// Output of a binary head: loss of `real` labelled 1 and `sim` labelled 0,
/// plus gradients of that loss w.r.t. the head parameters and both inputs.
struct HeadPass {
    loss: f64,
    grads: MlpGrad,
    d_real: Array2<f64>,
    d_sim: Array2<f64>,
}

fn binary_head(head: &Mlp, real: ArrayView2<f64>, sim: ArrayView2<f64>, weight: f64) -> Result<HeadPass> {
    let mut loss = 0.0;
    let mut grads = MlpGrad::zeros_like(head);
    let mut inputs = Vec::with_capacity(2);
    for (x, label) in [(real, 1.0), (sim, 0.0)] {
        let (z, cache) = head.forward(x, true)?;
        let p = sigmoid_clamped(z.view());
        let p_col = p.column(0);
        let y = Array1::from_elem(p_col.len(), label);
        loss += bce(y.view(), p_col)?;
        let dp = bce_grad(y.view(), p_col)? * weight;
        let dp = dp.insert_axis(Axis(1));
        let dz = sigmoid_clamped_backward(z.view(), dp.view());
        let (g, dx) = head.backward(&cache, dz.view());
        grads.accumulate(&g);
        inputs.push(dx);
    }
    let d_sim = inputs.pop().unwrap();
    let d_real = inputs.pop().unwrap();
    Ok(HeadPass {
        loss,
        grads,
        d_real,
        d_sim,
    })
}

/// `λ·L_MSE + (1−λ)·(L_C + L_D)` with gradients for the encoder, decoder,
/// classifier and discriminator.
pub fn stage1_loss(params: &MacdParams, batch: &Stage1Batch<'_>, cfg: &MacdConfig) -> Result<Stage1Output> {
    stage1_loss_with(params, batch, cfg, LossTerms::ALL)
}

pub fn stage1_loss_with(
    params: &MacdParams,
    batch: &Stage1Batch<'_>,
    cfg: &MacdConfig,
    terms: LossTerms,
) -> Result<Stage1Output> {
    let genes = params.n_genes();
    if batch.real.ncols() != genes || batch.sim.ncols() != genes {
        return Err(Error::shape(
            "stage-1 batches",
            format!("{genes} genes"),
            format!("real {} / simulated {}", batch.real.ncols(), batch.sim.ncols()),
        ));
    }
    if batch.mask.entries.dim() != batch.real.dim() {
        return Err(Error::shape(
            "stage-1 mask",
            format!("{:?}", batch.real.dim()),
            format!("{:?}", batch.mask.entries.dim()),
        ));
    }

    // Masked input and the entries scored by the reconstruction loss.
    let all_entries;
    let (input, scored) = if !cfg.use_mask {
        all_entries = MaskMatrix::full(batch.real.nrows(), genes);
        (batch.real.to_owned(), &all_entries)
    } else if cfg.full_reconstruction {
        all_entries = MaskMatrix::full(batch.real.nrows(), genes);
        (batch.mask.apply(batch.real), &all_entries)
    } else {
        (batch.mask.apply(batch.real), batch.mask)
    };

    let (h_real, enc_real_cache) = params.encoder.forward(input.view(), true)?;
    let (x_hat, dec_cache) = params.decoder.forward(h_real.view(), true)?;
    let mse = masked_mse(x_hat.view(), batch.real, scored.entries.view())?;

    let (recon_weight, bce_weight) = if cfg.use_adversarial {
        (cfg.lambda, 1.0 - cfg.lambda)
    } else {
        (1.0, 0.0)
    };

    let mut d_x_hat = masked_mse_grad(x_hat.view(), batch.real, scored.entries.view())?;
    d_x_hat *= if terms.reconstruction { recon_weight } else { 0.0 };
    let (decoder_grads, mut d_h_real) = params.decoder.backward(&dec_cache, d_x_hat.view());

    let mut encoder_grads;
    let (mut classifier_loss, mut discriminator_loss) = (0.0, 0.0);
    let mut classifier_grads = MlpGrad::zeros_like(&params.classifier);
    let mut discriminator_grads = MlpGrad::zeros_like(&params.discriminator);
    let mut encoder_sim_cache = None;

    if cfg.use_adversarial {
        let (h_sim, enc_sim_cache) = params.encoder.forward(batch.sim, true)?;
        let (real_first, real_second) = split_latent(h_real.view())?;
        let (sim_first, sim_second) = split_latent(h_sim.view())?;

        let c_weight = if terms.classifier { bce_weight } else { 0.0 };
        let cls = binary_head(&params.classifier, real_first.view(), sim_first.view(), c_weight)?;

        let d_weight = if terms.discriminator { bce_weight } else { 0.0 };
        let disc = binary_head(
            &params.discriminator,
            grl_forward(real_second.view()).view(),
            grl_forward(sim_second.view()).view(),
            d_weight,
        )?;
        let d_real_second = grl_backward(disc.d_real.view(), cfg.grl_alpha);
        let d_sim_second = grl_backward(disc.d_sim.view(), cfg.grl_alpha);

        d_h_real += &concat_latent(cls.d_real.view(), d_real_second.view())?;
        let d_h_sim = concat_latent(cls.d_sim.view(), d_sim_second.view())?;

        encoder_grads = params.encoder.backward(&enc_real_cache, d_h_real.view()).0;
        encoder_grads.accumulate(&params.encoder.backward(&enc_sim_cache, d_h_sim.view()).0);

        classifier_loss = cls.loss;
        discriminator_loss = disc.loss;
        classifier_grads = cls.grads;
        discriminator_grads = disc.grads;
        encoder_sim_cache = Some(enc_sim_cache);
    } else {
        encoder_grads = params.encoder.backward(&enc_real_cache, d_h_real.view()).0;
    }

    Ok(Stage1Output {
        loss: recon_weight * mse.loss + bce_weight * (classifier_loss + discriminator_loss),
        reconstruction: mse.loss,
        classifier: classifier_loss,
        discriminator: discriminator_loss,
        degenerate_mask: mse.degenerate,
        grads: Stage1Grads {
            encoder: encoder_grads,
            decoder: decoder_grads,
            classifier: classifier_grads,
            discriminator: discriminator_grads,
        },
        caches: Stage1Caches {
            encoder_real: enc_real_cache,
            encoder_sim: encoder_sim_cache,
            decoder: dec_cache,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Grads {
    pub encoder: MlpGrad,
    pub predictor: MlpGrad,
}

impl Parameters for Stage2Grads {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        let mut out = prefixed("encoder", self.encoder.tensors());
        out.extend(prefixed("predictor", self.predictor.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        let mut out = prefixed("encoder", self.encoder.tensors_mut());
        out.extend(prefixed("predictor", self.predictor.tensors_mut()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Stage2Caches {
    encoder: MlpCache,
    predictor: MlpCache,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub loss: f64,
    pub predicted: Array2<f64>,
    pub grads: Stage2Grads,
    caches: Stage2Caches,
}

/// Mean squared error between predicted and true proportions of simulated
/// spots, with gradients for the encoder and predictor.
pub fn stage2_loss(params: &MacdParams, sim: ArrayView2<f64>, y_true: ArrayView2<f64>) -> Result<Stage2Output> {
    if y_true.ncols() != params.n_types() {
        return Err(Error::shape("stage-2 cell types", params.n_types(), y_true.ncols()));
    }
    if y_true.nrows() != sim.nrows() {
        return Err(Error::shape("stage-2 rows", sim.nrows(), y_true.nrows()));
    }
    if sim.ncols() != params.n_genes() {
        return Err(Error::shape("stage-2 genes", params.n_genes(), sim.ncols()));
    }
    let (h, enc_cache) = params.encoder.forward(sim, true)?;
    let (logits, pred_cache) = params.predictor.forward(h.view(), true)?;
    let y = softmax_rows(logits.view());
    let diff = &y - &y_true;
    let n = diff.len() as f64;
    let loss = diff.mapv(|d| d * d).sum() / n;

    let d_y = diff * (2.0 / n);
    let d_logits = softmax_backward(y.view(), d_y.view());
    let (predictor_grads, d_h) = params.predictor.backward(&pred_cache, d_logits.view());
    let (encoder_grads, _) = params.encoder.backward(&enc_cache, d_h.view());
    Ok(Stage2Output {
        loss,
        predicted: y,
        grads: Stage2Grads {
            encoder: encoder_grads,
            predictor: predictor_grads,
        },
        caches: Stage2Caches {
            encoder: enc_cache,
            predictor: pred_cache,
        },
    })
}
