use std::ops::Range;

use log::{debug, info};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::MacdConfig;
use super::mask::{mask_rng, MaskMatrix};
use super::network::{stage1_loss, stage2_loss, MacdParams, Stage1Batch};
use crate::error::{Error, Result};
use crate::expr_data::ExpressionMatrix;
use crate::metrics::ProportionMatrix;
use crate::nn::{AdamState, Parameters};
use crate::simulation::SimulatedST;

/// Both epoch losses must move less than this for `PATIENCE` epochs in a
/// row before training stops early.
const CONVERGENCE_TOL: f64 = 1e-5;
const PATIENCE: usize = 10;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage1: f64,
    pub stage2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: MacdParams,
    pub config: MacdConfig,
    pub gene_order: Vec<String>,
    pub type_order: Vec<String>,
    pub loss_history: Vec<EpochLoss>,
    /// Library-size target applied to inputs before the model, when the
    /// model was trained on `normalize_log1p` output.
    pub target_sum: Option<f64>,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Consecutive ranges of at most `batch` items covering `0..n`. A trailing
/// single item is folded into the previous batch since batch norm needs at
/// least two rows.
pub fn batch_ranges(n: usize, batch: usize) -> Vec<Range<usize>> {
    let mut ranges: Vec<Range<usize>> = (0..n)
        .step_by(batch)
        .map(|start| start..(start + batch).min(n))
        .collect();
    if ranges.len() > 1 && ranges.last().map(|r| r.len()) == Some(1) {
        let last = ranges.pop().unwrap();
        ranges.last_mut().unwrap().end = last.end;
    }
    ranges
}

fn gather(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

fn check_finite(value: f64, stage: &'static str, epoch: usize, batch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { stage, epoch, batch })
    }
}

/// Alternates one epoch of stage-1 steps with one epoch of stage-2 steps.
pub fn train(real_st: &ExpressionMatrix, sim: &SimulatedST, cfg: &MacdConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let sim_x = &sim.expression;
    if real_st.n_rows() < 2 || sim_x.n_rows() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least two real and two simulated spots".into(),
        ));
    }
    if real_st.gene_names() != sim_x.gene_names() {
        return Err(Error::InvalidArgument(
            "real and simulated matrices must share the same gene order".into(),
        ));
    }
    if sim.proportions.n_spots() != sim_x.n_rows() {
        return Err(Error::shape("simulated proportions", sim_x.n_rows(), sim.proportions.n_spots()));
    }

    let n_genes = real_st.n_genes();
    let n_types = sim.proportions.type_order().len();
    let mut params = MacdParams::init(n_genes, n_types, cfg, &mut rng_stream(cfg.seed, INIT_STREAM));
    let mut shuffle_rng = rng_stream(cfg.seed, SHUFFLE_STREAM);
    let mut opt1 = AdamState::new(cfg.lr);
    let mut opt2 = AdamState::new(cfg.lr);

    let real = real_st.values().view();
    let sim_values = sim_x.values().view();
    let sim_y = sim.proportions.values().view();
    let (n_real, n_sim) = (real.nrows(), sim_values.nrows());

    info!(
        "training on {n_real} real / {n_sim} simulated spots, {n_genes} genes, {n_types} cell types, {} parameters",
        params.stage1_tensors_mut().iter().map(|(_, t)| t.len()).sum::<usize>()
            + params.predictor.num_scalars()
    );

    let mut history: Vec<EpochLoss> = Vec::with_capacity(cfg.epochs);
    let mut steady = 0usize;
    for epoch in 0..cfg.epochs {
        // Stage 1: size-matched real/simulated batches, cycling the smaller set.
        let mask = MaskMatrix::sample(
            n_real,
            n_genes,
            cfg.effective_mask_rate(),
            &mut mask_rng(cfg.seed, epoch as u64),
        )?;
        let mut real_order: Vec<usize> = (0..n_real).collect();
        let mut sim_order: Vec<usize> = (0..n_sim).collect();
        real_order.shuffle(&mut shuffle_rng);
        sim_order.shuffle(&mut shuffle_rng);

        let mut stage1_total = 0.0;
        let ranges = batch_ranges(n_real.max(n_sim), cfg.batch_size);
        for (b, range) in ranges.iter().enumerate() {
            let real_idx: Vec<usize> = range.clone().map(|i| real_order[i % n_real]).collect();
            let sim_idx: Vec<usize> = range.clone().map(|i| sim_order[i % n_sim]).collect();
            let real_batch = gather(real, &real_idx);
            let sim_batch = gather(sim_values, &sim_idx);
            let batch_mask = mask.select_rows(&real_idx);
            let out = stage1_loss(
                &params,
                &Stage1Batch {
                    real: real_batch.view(),
                    mask: &batch_mask,
                    sim: sim_batch.view(),
                },
                cfg,
            )?;
            stage1_total += check_finite(out.loss, "stage-1", epoch, b)?;
            opt1.step_tensors(params.stage1_tensors_mut(), out.grads.tensors())?;
            params.commit_stage1_stats(&out);
        }
        let stage1 = stage1_total / ranges.len() as f64;

        // Stage 2: supervised proportions on simulated spots.
        let mut order: Vec<usize> = (0..n_sim).collect();
        order.shuffle(&mut shuffle_rng);
        let mut stage2_total = 0.0;
        let ranges = batch_ranges(n_sim, cfg.batch_size);
        for (b, range) in ranges.iter().enumerate() {
            let idx = &order[range.clone()];
            let x = gather(sim_values, idx);
            let y = gather(sim_y, idx);
            let out = stage2_loss(&params, x.view(), y.view())?;
            stage2_total += check_finite(out.loss, "stage-2", epoch, b)?;
            opt2.step_tensors(params.stage2_tensors_mut(), out.grads.tensors())?;
            params.commit_stage2_stats(&out);
        }
        let stage2 = stage2_total / ranges.len() as f64;

        debug!("epoch {}: stage1 {stage1:.6} stage2 {stage2:.6}", epoch + 1);
        if let Some(prev) = history.last() {
            if (prev.stage1 - stage1).abs() < CONVERGENCE_TOL && (prev.stage2 - stage2).abs() < CONVERGENCE_TOL {
                steady += 1;
            } else {
                steady = 0;
            }
        }
        history.push(EpochLoss { stage1, stage2 });
        if steady >= PATIENCE {
            info!("converged after {} epochs", epoch + 1);
            break;
        }
    }

    Ok(TrainedModel {
        params,
        config: cfg.clone(),
        gene_order: real_st.gene_names().to_vec(),
        type_order: sim.proportions.type_order().to_vec(),
        loss_history: history,
        target_sum: None,
    })
}

/// Predicts cell-type proportions for unmasked spots, using batch-norm
/// running statistics. Columns of `x_r` are reordered to the model's genes;
/// extra genes are ignored.
pub fn predict(model: &TrainedModel, x_r: &ExpressionMatrix) -> Result<ProportionMatrix> {
    let x = x_r.select_genes(&model.gene_order)?;
    let y = model.params.predict_proportions(x.values().view(), false)?;
    ProportionMatrix::new(x.row_ids().to_vec(), model.type_order.clone(), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_fold_trailing_singleton() {
        assert_eq!(batch_ranges(5, 2), vec![0..2, 2..5]);
        assert_eq!(batch_ranges(6, 2), vec![0..2, 2..4, 4..6]);
        assert_eq!(batch_ranges(3, 10), vec![0..3]);
        assert_eq!(batch_ranges(1, 4), vec![0..1]);
    }
}
