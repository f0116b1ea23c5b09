//! Single-file weight archive: magic bytes, a little-endian `u32` header
//! length, a JSON header, then every tensor as raw little-endian `f32` in
//! header order.

use std::fs;
use std::path::Path;

use hsfuse_nn::{ParamStore, Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const MAGIC: &[u8; 8] = b"HSFUSEW1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: String,
    pub seed: u64,
    pub config: serde_json::Value,
    #[serde(default)]
    pub extra: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn header_for<T: Real>(store: &ParamStore<T>, model: &str, seed: u64, config: serde_json::Value) -> CheckpointHeader {
    let tensors = store
        .ids()
        .map(|id| TensorEntry {
            name: store.name(id).to_string(),
            shape: store.get(id).shape().to_vec(),
            trainable: store.is_trainable(id),
        })
        .collect();
    CheckpointHeader { model: model.into(), seed, config, extra: serde_json::Value::Null, tensors }
}

pub fn encode<T: Real>(store: &ParamStore<T>, header: &CheckpointHeader) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for id in store.ids() {
        for v in store.get(id).data() {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save<T: Real>(path: &Path, store: &ParamStore<T>, header: &CheckpointHeader) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode(store, header)?)?;
    Ok(())
}

/// Parse an archive into its header and tensors.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<Tensor<T>>)> {
    let bad = |m: &str| CoreError::Checkpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not a weight archive"));
    }
    let mut at = MAGIC.len();
    let len = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    at += 4;
    let json = bytes.get(at..at + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
    at += len;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = bytes.get(at..at + 4 * n).ok_or_else(|| bad(&format!("truncated tensor {}", entry.name)))?;
        let data = raw.chunks_exact(4).map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)).collect();
        tensors.push(Tensor::from_vec(&entry.shape, data));
        at += 4 * n;
    }
    if at != bytes.len() {
        return Err(bad(&format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok((header, tensors))
}

pub fn load_header(path: &Path) -> Result<CheckpointHeader> {
    Ok(decode::<f32>(&fs::read(path)?)?.0)
}

/// Copy archived tensors into a store built with the same layout.
pub fn restore<T: Real>(store: &mut ParamStore<T>, header: &CheckpointHeader, tensors: Vec<Tensor<T>>) -> Result<()> {
    if header.tensors.len() != store.len() {
        return Err(CoreError::Checkpoint(format!(
            "archive has {} tensors, model has {}",
            header.tensors.len(),
            store.len()
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for ((id, entry), t) in ids.into_iter().zip(&header.tensors).zip(tensors) {
        if store.name(id) != entry.name || store.get(id).shape() != entry.shape.as_slice() {
            return Err(CoreError::Checkpoint(format!(
                "tensor {} {:?} does not match model tensor {} {:?}",
                entry.name,
                entry.shape,
                store.name(id),
                store.get(id).shape()
            )));
        }
        *store.get_mut(id) = t;
    }
    Ok(())
}
