//! Runs the `macd` binary against a small on-disk fixture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use macd::simulation::{simulate_pseudospots, PseudoSpotConfig};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub config: PathBuf,
    pub truth: PathBuf,
}

/// Model and data sizes that keep a full CLI pipeline to a few seconds.
pub const SMALL_RUN: &str = "\
sc_expression = sc.tsv
sc_labels = labels.tsv
st_expression = st.tsv
top_k = 12
n_spots = 160
latent_dim = 16
encoder_hidden = 24
decoder_hidden = 24, 24
head_hidden = 8
batch_size = 64
epochs = 3
";

/// Reference, unlabeled spots and their true proportions. `extra` is
/// appended to the run configuration.
pub fn fixture(extra: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let (sc, labels) = super::block_reference(1);
    let st = simulate_pseudospots(
        &sc,
        &labels,
        &PseudoSpotConfig {
            n_spots: 40,
            seed: 99,
            ..PseudoSpotConfig::default()
        },
    )
    .unwrap();
    let p = dir.path();
    fs::write(p.join("sc.tsv"), sc.to_tsv_string()).unwrap();
    fs::write(p.join("labels.tsv"), labels.to_tsv_string()).unwrap();
    fs::write(p.join("st.tsv"), st.expression.to_tsv_string()).unwrap();
    fs::write(p.join("truth.tsv"), st.proportions.to_tsv_string()).unwrap();
    let config = p.join("run.conf");
    fs::write(&config, format!("# fixture\n{SMALL_RUN}{extra}")).unwrap();
    Fixture {
        truth: p.join("truth.tsv"),
        config,
        dir,
    }
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// `macd <command> --config run.conf [--set ...]`
    pub fn run(&self, command: &str, sets: &[&str]) -> Output {
        self.run_env(command, sets, &[])
    }

    pub fn run_env(&self, command: &str, sets: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_macd"));
        cmd.arg(command).arg("--config").arg(&self.config);
        for s in sets {
            cmd.arg("--set").arg(s);
        }
        cmd.env_remove("DECONV_SEED");
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }
}

pub fn sha256(path: &Path) -> String {
    let digest = Sha256::digest(fs::read(path).unwrap());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub const PIPELINE_FILES: &[&str] = &[
    "simulated_expression.tsv",
    "simulated_proportions.tsv",
    "model.macd",
    "loss_history.tsv",
    "predicted_proportions.tsv",
];

/// `simulate`, `train`, `predict` into `out_dir`; returns the exit codes.
pub fn pipeline(fx: &Fixture, out_dir: &str, sets: &[&str]) -> Vec<i32> {
    let out = format!("output_dir={}", fx.path(out_dir).display());
    let mut all = vec![out.as_str()];
    all.extend_from_slice(sets);
    ["simulate", "train", "predict"]
        .iter()
        .map(|c| fx.run(c, &all).status.code().unwrap_or(-1))
        .collect()
}

/// Hashes of every pipeline output under `out_dir`.
pub fn pipeline_hashes(fx: &Fixture, out_dir: &str) -> Vec<String> {
    PIPELINE_FILES
        .iter()
        .map(|f| sha256(&fx.path(out_dir).join(f)))
        .collect()
}
