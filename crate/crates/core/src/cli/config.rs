//! Flat `key = value` run configuration with command-line overrides.

use std::path::{Path, PathBuf};

use crate::model::MacdConfig;
use crate::simulation::PseudoSpotConfig;

/// Environment variable consulted for the seed when no `seed` key is set.
pub const SEED_ENV: &str = "DECONV_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sc_expression: Option<PathBuf>,
    pub sc_labels: Option<PathBuf>,
    pub st_expression: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub prediction: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Pre-simulated training data used by `train` instead of simulating.
    pub sim_expression: Option<PathBuf>,
    pub sim_proportions: Option<PathBuf>,
    /// `(method name, proportions file)` pairs for `benchmark`.
    pub methods: Vec<(String, PathBuf)>,
    pub top_k: usize,
    pub target_sum: f64,
    pub simulation: PseudoSpotConfig,
    pub model: MacdConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sc_expression: None,
            sc_labels: None,
            st_expression: None,
            output_dir: PathBuf::from("."),
            checkpoint: None,
            prediction: None,
            truth: None,
            sim_expression: None,
            sim_proportions: None,
            methods: Vec::new(),
            top_k: 200,
            target_sum: 1e4,
            simulation: PseudoSpotConfig::default(),
            model: MacdConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{value}` for `{key}`")),
    }
}

impl RunConfig {
    /// Builds a config from optional file contents and `key=value`
    /// overrides. Relative paths in the file resolve against `base_dir`.
    pub fn build(file: Option<(&str, &Path)>, overrides: &[String], env_seed: Option<&str>) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        let mut seed_set = false;
        if let Some((text, base_dir)) = file {
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
                seed_set |= cfg.set(key.trim(), value.trim(), Some(base_dir))?;
            }
        }
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| format!("override `{item}`: expected key=value"))?;
            seed_set |= cfg.set(key.trim(), value.trim(), None)?;
        }
        if !seed_set {
            if let Some(raw) = env_seed {
                cfg.set("seed", raw.trim(), None)
                    .map_err(|e| format!("{SEED_ENV}: {e}"))?;
            }
        }
        Ok(cfg)
    }

    /// Applies one key. Returns whether the key was `seed`.
    pub fn set(&mut self, key: &str, value: &str, base_dir: Option<&Path>) -> Result<bool, String> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            match base_dir {
                Some(base) if p.is_relative() => base.join(p),
                _ => p,
            }
        };
        match key {
            "sc_expression" => self.sc_expression = Some(path(value)),
            "sc_labels" => self.sc_labels = Some(path(value)),
            "st_expression" => self.st_expression = Some(path(value)),
            "output_dir" => self.output_dir = path(value),
            "checkpoint" => self.checkpoint = Some(path(value)),
            "prediction" => self.prediction = Some(path(value)),
            "truth" => self.truth = Some(path(value)),
            "sim_expression" => self.sim_expression = Some(path(value)),
            "sim_proportions" => self.sim_proportions = Some(path(value)),
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|entry| {
                        entry
                            .split_once('=')
                            .map(|(name, p)| (name.trim().to_string(), path(p.trim())))
                            .ok_or_else(|| format!("methods entry `{entry}`: expected name=path"))
                    })
                    .collect::<Result<_, _>>()?
            }
            "top_k" => self.top_k = parse(key, value)?,
            "target_sum" => self.target_sum = parse(key, value)?,
            "n_spots" => self.simulation.n_spots = parse(key, value)?,
            "cells_per_spot_min" => self.simulation.cells_per_spot_min = parse(key, value)?,
            "cells_per_spot_max" => self.simulation.cells_per_spot_max = parse(key, value)?,
            "seed" => {
                let seed: u64 = parse(key, value)?;
                self.simulation.seed = seed;
                self.model.seed = seed;
                return Ok(true);
            }
            "latent_dim" => self.model.latent_dim = parse(key, value)?,
            "encoder_hidden" => self.model.encoder_hidden = parse(key, value)?,
            "decoder_hidden" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [a, b] => self.model.decoder_hidden = [parse(key, a)?, parse(key, b)?],
                    [a] => {
                        let w = parse(key, a)?;
                        self.model.decoder_hidden = [w, w];
                    }
                    _ => return Err(format!("`{key}` takes one or two widths")),
                }
            }
            "head_hidden" => self.model.head_hidden = parse(key, value)?,
            "mask_rate" => self.model.mask_rate = parse(key, value)?,
            "lambda" => self.model.lambda = parse(key, value)?,
            "grl_alpha" => self.model.grl_alpha = parse(key, value)?,
            "lr" => self.model.lr = parse(key, value)?,
            "batch_size" => self.model.batch_size = parse(key, value)?,
            "epochs" => self.model.epochs = parse(key, value)?,
            "leaky_slope" => self.model.leaky_slope = parse(key, value)?,
            "use_mask" => self.model.use_mask = parse_bool(key, value)?,
            "use_adversarial" => self.model.use_adversarial = parse_bool(key, value)?,
            "full_reconstruction" => self.model.full_reconstruction = parse_bool(key, value)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(false)
    }
}
