//! Pseudo-spot simulation: labeled synthetic spots built by summing
//! randomly drawn single-cell profiles.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr_data::{CellTypeLabels, ExpressionMatrix};
use crate::metrics::ProportionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoSpotConfig {
    pub n_spots: usize,
    pub cells_per_spot_min: usize,
    pub cells_per_spot_max: usize,
    pub seed: u64,
}

impl Default for PseudoSpotConfig {
    fn default() -> Self {
        Self {
            n_spots: 8000,
            cells_per_spot_min: 2,
            cells_per_spot_max: 10,
            seed: 0,
        }
    }
}

impl PseudoSpotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_spots == 0 {
            return Err(Error::InvalidArgument("n_spots must be at least 1".into()));
        }
        if self.cells_per_spot_min == 0 || self.cells_per_spot_min > self.cells_per_spot_max {
            return Err(Error::InvalidArgument(format!(
                "cells per spot range [{}, {}] is invalid",
                self.cells_per_spot_min, self.cells_per_spot_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedST {
    pub expression: ExpressionMatrix,
    pub proportions: ProportionMatrix,
    /// Contributing cell IDs per spot, in draw order (repeats allowed).
    pub composition: Vec<Vec<String>>,
}

/// Independent generator for one spot. Each spot owns a ChaCha stream so
/// spots can be produced in any order without changing the output.
pub fn spot_rng(seed: u64, spot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(spot as u64);
    rng
}

/// Draws `k ~ U{min..=max}` then `k` cell indices with replacement.
pub fn draw_spot_cells(rng: &mut impl Rng, n_cells: usize, cfg: &PseudoSpotConfig) -> Vec<usize> {
    let k = rng.random_range(cfg.cells_per_spot_min..=cfg.cells_per_spot_max);
    (0..k).map(|_| rng.random_range(0..n_cells)).collect()
}

/// Sums the chosen reference rows and tallies type fractions.
pub fn assemble_spot(
    sc: &ExpressionMatrix,
    cell_types: &[usize],
    n_types: usize,
    cells: &[usize],
) -> (Array1<f64>, Array1<f64>) {
    let mut expression = Array1::zeros(sc.n_genes());
    let mut fractions = Array1::zeros(n_types);
    for &c in cells {
        expression += &sc.values().row(c);
        fractions[cell_types[c]] += 1.0;
    }
    fractions /= cells.len() as f64;
    (expression, fractions)
}

pub fn simulate_pseudospots(
    sc: &ExpressionMatrix,
    labels: &CellTypeLabels,
    cfg: &PseudoSpotConfig,
) -> Result<SimulatedST> {
    cfg.validate()?;
    if sc.n_rows() == 0 || sc.n_genes() == 0 {
        return Err(Error::InvalidArgument("empty single-cell reference".into()));
    }
    let cell_types = labels.type_indices(sc)?;
    let n_types = labels.type_order().len();

    let mut expression = Array2::zeros((cfg.n_spots, sc.n_genes()));
    let mut proportions = Array2::zeros((cfg.n_spots, n_types));
    let mut composition = Vec::with_capacity(cfg.n_spots);
    for spot in 0..cfg.n_spots {
        let mut rng = spot_rng(cfg.seed, spot);
        let cells = draw_spot_cells(&mut rng, sc.n_rows(), cfg);
        let (expr, frac) = assemble_spot(sc, &cell_types, n_types, &cells);
        expression.row_mut(spot).assign(&expr);
        proportions.row_mut(spot).assign(&frac);
        composition.push(cells.iter().map(|&c| sc.row_ids()[c].clone()).collect());
    }

    let spot_ids: Vec<String> = (0..cfg.n_spots).map(|i| format!("spot_{i}")).collect();
    Ok(SimulatedST {
        expression: ExpressionMatrix::new(spot_ids.clone(), sc.gene_names().to_vec(), expression)?,
        proportions: ProportionMatrix::new(spot_ids, labels.type_order().to_vec(), proportions)?,
        composition,
    })
}
