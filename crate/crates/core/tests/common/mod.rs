//! Shared test helpers: a central finite-difference oracle and the
//! block-structured synthetic reference used by the end-to-end checks.
#![allow(dead_code)]

use macd::expr_data::{normalize_log1p, CellTypeLabels, ExpressionMatrix};
use macd::metrics::{evaluate, EvaluationReport};
use macd::model::{predict, train, MacdConfig, TrainedModel};
use macd::nn::Parameters;
use macd::simulation::{simulate_pseudospots, PseudoSpotConfig, SimulatedST};
use ndarray::{Array2, ArrayD, ArrayViewD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub mod grad;
pub mod cli;
pub mod oracle;

pub const FD_STEP: f64 = 1e-5;

/// `||a - n|| / max(||a||, ||n||)`; tensors whose gradients are both
/// below `1e-9` in norm are compared absolutely.
pub fn rel_error(analytic: ArrayViewD<f64>, numeric: ArrayViewD<f64>) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` w.r.t. every entry of `x`.
pub fn numeric_grad_array(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.dim());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + FD_STEP;
        let up = f(&probe);
        probe[[r, c]] = orig - FD_STEP;
        let down = f(&probe);
        probe[[r, c]] = orig;
        out[[r, c]] = (up - down) / (2.0 * FD_STEP);
    }
    out
}

/// Central differences of `f` w.r.t. every tensor listed by `params`.
pub fn numeric_grad_params<P: Parameters>(params: &mut P, f: impl Fn(&P) -> f64) -> Vec<(String, ArrayD<f64>)> {
    let shapes: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (i, (name, shape)) in shapes.into_iter().enumerate() {
        let mut grad = ArrayD::zeros(shape);
        for j in 0..grad.len() {
            let orig = nudge(params, i, j, None);
            nudge(params, i, j, Some(orig + FD_STEP));
            let up = f(params);
            nudge(params, i, j, Some(orig - FD_STEP));
            let down = f(params);
            nudge(params, i, j, Some(orig));
            grad.as_slice_mut().unwrap()[j] = (up - down) / (2.0 * FD_STEP);
        }
        out.push((name, grad));
    }
    out
}

fn nudge<P: Parameters>(params: &mut P, tensor: usize, entry: usize, value: Option<f64>) -> f64 {
    let mut tensors = params.tensors_mut();
    let slot = tensors[tensor].1.as_slice_mut().expect("standard layout")[entry..]
        .first_mut()
        .unwrap();
    let old = *slot;
    if let Some(v) = value {
        *slot = v;
    }
    old
}

/// Worst relative error across tensors, with the offending tensor's name.
pub fn worst_error(analytic: &impl Parameters, numeric: &[(String, ArrayD<f64>)]) -> (String, f64) {
    let analytic = analytic.tensors();
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|((name, a), (nname, n))| {
            assert!(name.ends_with(nname.as_str()) || nname.ends_with(name.as_str()), "{name} vs {nname}");
            (name.clone(), rel_error(a.view(), n.view()))
        })
        .fold((String::new(), 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
}

pub const SUITE_TYPES: usize = 4;
pub const SUITE_CELLS_PER_TYPE: usize = 200;
pub const SUITE_GENES: usize = 120;
pub const SUITE_BLOCK: usize = 30;

/// Single-cell reference with disjoint high-expression gene blocks per type.
pub fn block_reference(seed: u64) -> (ExpressionMatrix, CellTypeLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let high = Poisson::new(20.0).unwrap();
    let low = Poisson::new(1.0).unwrap();
    let n = SUITE_TYPES * SUITE_CELLS_PER_TYPE;
    let mut values = Array2::zeros((n, SUITE_GENES));
    let mut ids = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for t in 0..SUITE_TYPES {
        for c in 0..SUITE_CELLS_PER_TYPE {
            let row = t * SUITE_CELLS_PER_TYPE + c;
            for g in 0..SUITE_GENES {
                let in_block = g / SUITE_BLOCK == t;
                values[[row, g]] = if in_block { high.sample(&mut rng) } else { low.sample(&mut rng) };
            }
            let id = format!("cell_{t}_{c}");
            pairs.push((id.clone(), format!("type_{t}")));
            ids.push(id);
        }
    }
    let genes = (0..SUITE_GENES).map(|g| format!("gene_{g:03}")).collect();
    (
        ExpressionMatrix::new(ids, genes, values).unwrap(),
        CellTypeLabels::from_pairs(pairs).unwrap(),
    )
}

pub struct Suite {
    pub train: SimulatedST,
    /// Held-out pseudo-spots standing in for real spatial data.
    pub heldout: SimulatedST,
}

/// Log-normalized training and held-out pseudo-spots.
pub fn synthetic_suite(seed: u64, n_train: usize, n_heldout: usize) -> Suite {
    let (sc, labels) = block_reference(seed);
    let sim = |n_spots, seed| {
        let cfg = PseudoSpotConfig {
            n_spots,
            cells_per_spot_min: 2,
            cells_per_spot_max: 10,
            seed,
        };
        let mut s = simulate_pseudospots(&sc, &labels, &cfg).unwrap();
        s.expression = normalize_log1p(&s.expression, 1e4).unwrap();
        s
    };
    Suite {
        train: sim(n_train, seed.wrapping_mul(31).wrapping_add(1)),
        heldout: sim(n_heldout, seed.wrapping_mul(31).wrapping_add(2)),
    }
}

/// Scaled-down defaults used by the end-to-end checks.
pub fn suite_config(seed: u64) -> MacdConfig {
    MacdConfig {
        epochs: 50,
        batch_size: 256,
        mask_rate: 0.3,
        lambda: 0.5,
        lr: 0.01,
        seed,
        ..MacdConfig::default()
    }
}

pub fn train_and_score(suite: &Suite, cfg: &MacdConfig) -> (TrainedModel, EvaluationReport) {
    let model = train(&suite.heldout.expression, &suite.train, cfg).unwrap();
    let pred = predict(&model, &suite.heldout.expression).unwrap();
    let report = evaluate(&pred, &suite.heldout.proportions).unwrap();
    (model, report)
}
