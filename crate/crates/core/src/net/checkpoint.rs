//! Checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `NWCK` |
//! | 4     | format version (u32) |
//! | 4     | header length `L` (u32) |
//! | L     | UTF-8 JSON header: variant, seed, normalization, network config, and the ordered list of `{name, shape}` |
//! | rest  | every parameter as f32, in header order, row-major |

use std::path::Path;

use autograd::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use super::{ModelState, NetConfig, NetError, Variant};
use crate::grid_store::NormStats;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    variant: Variant,
    seed: u64,
    norm: NormStats,
    config: NetConfig,
    params: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn encode_checkpoint(state: &ModelState) -> Vec<u8> {
    let header = Header {
        variant: state.variant,
        seed: state.seed,
        norm: state.norm,
        config: state.config.clone(),
        params: state
            .params
            .iter()
            .map(|(_, name, t)| Entry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * state.params.numel());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, t) in state.params.iter() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelState, NetError> {
    let bad = |m: &str| NetError::BadCheckpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing NWCK magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(NetError::CheckpointVersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| NetError::BadCheckpoint(e.to_string()))?;
    header.config.validate()?;

    // The parameter list must be exactly what this config builds.
    let reference = ModelState::init(header.config.clone(), header.variant, header.norm, header.seed)?;
    let expected: Vec<(&str, &[usize])> = reference.params.iter().map(|(_, n, t)| (n, t.shape())).collect();
    let found: Vec<(&str, &[usize])> = header.params.iter().map(|e| (e.name.as_str(), e.shape.as_slice())).collect();
    if expected != found {
        return Err(bad("parameter list does not match the stored config"));
    }

    let mut data = &bytes[12 + len..];
    let mut params = ParamStore::new();
    for e in &header.params {
        let n: usize = e.shape.iter().product();
        if data.len() < 4 * n {
            return Err(bad("truncated parameter data"));
        }
        let values = data[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        data = &data[4 * n..];
        params.insert(&e.name, Tensor::from_vec(&e.shape, values));
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after parameters"));
    }
    Ok(ModelState {
        config: header.config,
        params,
        norm: header.norm,
        seed: header.seed,
        variant: header.variant,
    })
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<(), NetError> {
    std::fs::write(path, encode_checkpoint(state))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState, NetError> {
    decode_checkpoint(&std::fs::read(path)?)
}
