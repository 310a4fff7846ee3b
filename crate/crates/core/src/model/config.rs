use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DEFAULT_SLOPE;

/// Architecture, optimization and ablation settings for MACD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacdConfig {
    /// Width of the latent representation; must be even so it can be split
    /// between the classifier and the discriminator.
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: [usize; 2],
    /// Hidden width of the classifier, discriminator and predictor heads.
    pub head_hidden: usize,
    pub mask_rate: f64,
    /// Weight of the reconstruction loss against the two BCE terms.
    pub lambda: f64,
    pub grl_alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub leaky_slope: f64,
    pub use_mask: bool,
    pub use_adversarial: bool,
    pub full_reconstruction: bool,
}

impl Default for MacdConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            encoder_hidden: 512,
            decoder_hidden: [512, 512],
            head_hidden: 64,
            mask_rate: 0.3,
            lambda: 0.5,
            grl_alpha: 1.0,
            lr: 0.01,
            batch_size: 2048,
            epochs: 200,
            seed: 0,
            leaky_slope: DEFAULT_SLOPE,
            use_mask: true,
            use_adversarial: true,
            full_reconstruction: false,
        }
    }
}

impl MacdConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.latent_dim == 0 || !self.latent_dim.is_multiple_of(2) {
            return fail(format!("latent_dim must be even and positive, got {}", self.latent_dim));
        }
        if self.encoder_hidden == 0 || self.decoder_hidden.contains(&0) || self.head_hidden == 0 {
            return fail("hidden widths must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return fail(format!("mask_rate must lie in [0, 1], got {}", self.mask_rate));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.grl_alpha >= 0.0 && self.grl_alpha.is_finite()) {
            return fail(format!("grl_alpha must be nonnegative, got {}", self.grl_alpha));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 (batch norm)".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        Ok(())
    }

    /// Mask rate actually applied to the encoder input.
    pub fn effective_mask_rate(&self) -> f64 {
        if self.use_mask {
            self.mask_rate
        } else {
            0.0
        }
    }
}
