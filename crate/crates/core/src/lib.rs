//! Cell-type deconvolution of spatial transcriptomics spots with a masked
//! adversarial neural network trained on simulated pseudo-spots.
//!
//! Pipeline: [`expr_data`] loads and preprocesses matrices,
//! [`simulation`] builds labeled pseudo-spots from a single-cell reference,
//! [`model`] trains and applies the network (built on the [`nn`] kernel),
//! and [`metrics`] scores predicted proportions. [`cli`] wires these into
//! the `macd` command.

pub mod cli;
pub mod error;
pub mod expr_data;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod simulation;
mod tsv;

pub use error::{Error, Result};
pub use expr_data::{CellTypeLabels, ExpressionMatrix, GenePanel};
pub use metrics::{EvaluationReport, MetricSet, ProportionMatrix};
pub use model::{MacdConfig, MacdParams, TrainedModel};
pub use simulation::{PseudoSpotConfig, SimulatedST};
