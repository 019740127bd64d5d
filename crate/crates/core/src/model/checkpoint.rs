//! Binary checkpoint: an 8-byte magic, a little-endian `u64` header length,
//! a JSON header (config and tensor table), then every tensor as
//! little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::Parameters;
use super::Model;
use crate::corpus::write_atomic;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SVCKPT01";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn encode(model: &Model, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let tensors = model.params.tensors();
    let header = Header {
        config: model.config.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.params.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<(Model, serde_json::Value)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    header.config.validate()?;
    let mut params = Parameters::init(&header.config);
    let mut data = &bytes[16 + len..];
    {
        let slots = params.tensors_mut();
        if slots.len() != header.tensors.len() {
            return Err(bad("tensor count does not match the configuration"));
        }
        for ((name, mut slot), entry) in slots.into_iter().zip(&header.tensors) {
            if name != entry.name || slot.shape() != entry.shape.as_slice() {
                return Err(Error::Checkpoint(format!("unexpected tensor {}", entry.name)));
            }
            let n = slot.len() * 8;
            if data.len() < n {
                return Err(bad("truncated tensor data"));
            }
            for (v, chunk) in slot.iter_mut().zip(data[..n].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            data = &data[n..];
        }
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok((
        Model {
            config: header.config,
            params,
        },
        header.metadata,
    ))
}

/// Writes `model` plus free-form `metadata` (seeds, history summary) atomically.
pub fn save_checkpoint(path: &Path, model: &Model, metadata: serde_json::Value) -> Result<()> {
    write_atomic(path, &encode(model, metadata)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
