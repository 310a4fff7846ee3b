use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr_data::ExpressionMatrix;

/// Binary mask; `true` marks a masked (hidden) entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    pub entries: Array2<bool>,
    pub mask_rate: f64,
}

/// Number of masked entries per row: `round(rho * genes)`.
pub fn masked_per_row(rho: f64, genes: usize) -> usize {
    ((rho * genes as f64).round() as usize).min(genes)
}

impl MaskMatrix {
    /// Draws `round(rho * cols)` distinct columns per row.
    pub fn sample(rows: usize, cols: usize, rho: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("mask rate must lie in [0, 1], got {rho}")));
        }
        let k = masked_per_row(rho, cols);
        let mut entries = Array2::from_elem((rows, cols), false);
        for mut row in entries.rows_mut() {
            for c in rand::seq::index::sample(rng, cols, k) {
                row[c] = true;
            }
        }
        Ok(Self {
            entries,
            mask_rate: rho,
        })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            entries: Array2::from_elem((rows, cols), true),
            mask_rate: 1.0,
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            entries: Array2::from_elem((rows, cols), false),
            mask_rate: 0.0,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            entries: self.entries.select(Axis(0), rows),
            mask_rate: self.mask_rate,
        }
    }

    /// Copy of `x` with masked entries set to zero.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        ndarray::Zip::from(&mut out)
            .and(&self.entries)
            .for_each(|v, &m| {
                if m {
                    *v = 0.0;
                }
            });
        out
    }
}

/// Generator for the mask of a given training epoch.
pub fn mask_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x4d41_534b_0000_0000 | epoch);
    rng
}

/// Masks `round(rho * G)` random entries of every row of `x`.
pub fn apply_mask(x: &ExpressionMatrix, rho: f64, seed: u64) -> Result<(ExpressionMatrix, MaskMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = MaskMatrix::sample(x.n_rows(), x.n_genes(), rho, &mut rng)?;
    let masked = ExpressionMatrix::new(
        x.row_ids().to_vec(),
        x.gene_names().to_vec(),
        mask.apply(x.values().view()),
    )?;
    Ok((masked, mask))
}
