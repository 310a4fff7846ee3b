//! Model checkpoint container.
//!
//! Layout:
//!
//! ```text
//! MACD1\n
//! <header: one line of JSON>\n
//! <payload: little-endian f64 values of every tensor, in header order>
//! ```
//!
//! The header holds `config`, `gene_order`, `type_order`, `target_sum`,
//! `loss_history` and `tensors`, a list of `{name, shape}` entries.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::MacdConfig;
use super::network::MacdParams;
use super::train::{EpochLoss, TrainedModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"MACD1\n";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: MacdConfig,
    gene_order: Vec<String>,
    type_order: Vec<String>,
    target_sum: Option<f64>,
    loss_history: Vec<EpochLoss>,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &TrainedModel) -> Vec<u8> {
    let tensors = model.params.state_tensors();
    let header = Header {
        config: model.config.clone(),
        gene_order: model.gene_order.clone(),
        type_order: model.type_order.clone(),
        target_sum: model.target_sum,
        loss_history: model.loss_history.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut out = MAGIC.to_vec();
    out.extend(serde_json::to_vec(&header).expect("header serializes"));
    out.push(b'\n');
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Checkpoint("bad magic, expected MACD1".into()))?;
    let newline = rest
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&rest[..newline])
        .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;
    let mut payload = &rest[newline + 1..];

    let mut params = MacdParams::init(
        header.gene_order.len(),
        header.type_order.len(),
        &header.config,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let targets = params.state_tensors_mut();
    if targets.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, header lists {}",
            targets.len(),
            header.tensors.len()
        )));
    }
    for ((name, mut view), entry) in targets.into_iter().zip(&header.tensors) {
        if name != entry.name || view.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` {:?} does not match expected `{name}` {:?}",
                entry.name,
                entry.shape,
                view.shape()
            )));
        }
        let needed = view.len() * 8;
        if payload.len() < needed {
            return Err(Error::Checkpoint(format!("payload truncated in `{name}`")));
        }
        for (v, chunk) in view.iter_mut().zip(payload[..needed].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        payload = &payload[needed..];
    }
    if !payload.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing payload bytes", payload.len())));
    }
    Ok(TrainedModel {
        params,
        config: header.config,
        gene_order: header.gene_order,
        type_order: header.type_order,
        loss_history: header.loss_history,
        target_sum: header.target_sum,
    })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
