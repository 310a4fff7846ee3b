//! The `macd` command: `simulate`, `train`, `predict`, `evaluate` and
//! `benchmark`, each driven by a run configuration.
//!
//! Exit codes: 0 success, 2 validation or input error, 3 I/O error,
//! 4 numerical failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_benchmark, cmd_evaluate, cmd_predict, cmd_simulate, cmd_train, CHECKPOINT_FILE, EVALUATION_FILE,
    LOSS_HISTORY_FILE, PREDICTION_FILE, SIM_EXPRESSION_FILE, SIM_PROPORTIONS_FILE, BENCHMARK_FILE,
};
pub use config::{RunConfig, SEED_ENV};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Io { .. } => EXIT_IO,
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) => EXIT_NUMERICAL,
            _ => EXIT_INVALID,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "macd", version, about = "Masked adversarial cell-type deconvolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate labeled pseudo-spots from a single-cell reference
    Simulate(CommonArgs),
    /// Preprocess, simulate and train a model checkpoint
    Train(TrainArgs),
    /// Predict cell-type proportions of spatial spots
    Predict(CommonArgs),
    /// Score predicted proportions against ground truth
    Evaluate(CommonArgs),
    /// Score several methods and rank them by accuracy score
    Benchmark(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Run configuration file (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Feed unmasked spots to the encoder and reconstruct every entry
    #[arg(long)]
    no_mask: bool,

    /// Drop the classifier and discriminator losses
    #[arg(long)]
    no_adversarial: bool,

    /// Score the reconstruction on every entry, not only masked ones
    #[arg(long)]
    full_reconstruction: bool,
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::invalid(format!("config file not found: {}", path.display())));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            Some((text, base))
        }
        None => None,
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    RunConfig::build(
        file.as_ref().map(|(t, b)| (t.as_str(), b.as_path())),
        &args.set,
        env_seed.as_deref(),
    )
    .map_err(CliError::invalid)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => load_config(a).and_then(|c| cmd_simulate(&c)),
        Command::Train(a) => load_config(&a.common).and_then(|mut c| {
            c.model.use_mask &= !a.no_mask;
            c.model.use_adversarial &= !a.no_adversarial;
            c.model.full_reconstruction |= a.full_reconstruction;
            cmd_train(&c)
        }),
        Command::Predict(a) => load_config(a).and_then(|c| cmd_predict(&c)),
        Command::Evaluate(a) => load_config(a).and_then(|c| cmd_evaluate(&c)),
        Command::Benchmark(a) => load_config(a).and_then(|c| cmd_benchmark(&c)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
