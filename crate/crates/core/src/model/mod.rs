//! The masked adversarial deconvolution model: masking, network, the two
//! training stages, inference and checkpoints.

mod checkpoint;
mod config;
mod mask;
mod network;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC};
pub use config::MacdConfig;
pub use mask::{apply_mask, mask_rng, masked_per_row, MaskMatrix};
pub use network::{
    concat_latent, split_latent, stage1_loss, stage1_loss_with, stage2_loss, LossTerms, MacdParams,
    Stage1Batch, Stage1Grads, Stage1Output, Stage2Grads, Stage2Output,
};
pub use train::{batch_ranges, predict, train, EpochLoss, TrainedModel};
