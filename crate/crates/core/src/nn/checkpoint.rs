//! Checkpoint layout: magic `RCHK0001`, `u64` little-endian header length,
//! a JSON [`CheckpointHeader`], then every tensor's `f32` values in
//! little-endian order at the offsets listed in the header.

use std::fs;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RCHK0001";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values (not bytes) from the start of the data block.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Variant tag, config, vocabulary hash and seed of the model.
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn save_checkpoint(path: &Path, meta: &serde_json::Value, tensors: &[(String, Tensor)]) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut data: Vec<u8> = Vec::new();
    let mut offset = 0;
    for (name, t) in tensors {
        let values = t.flatten_all()?.to_vec1::<f32>()?;
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.dims().to_vec(),
            offset,
        });
        offset += values.len();
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        meta: meta.clone(),
        tensors: entries,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Input(format!("{}: {m}", path.display()));
    if !bytes.starts_with(MAGIC) || bytes.len() < 16 {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let hbytes = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(hbytes).map_err(|e| Error::json(path.display().to_string(), e))?;
    let data = &bytes[16 + hlen..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let raw = data
            .get(4 * e.offset..4 * (e.offset + n))
            .ok_or_else(|| bad("truncated tensor data"))?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((e.name.clone(), Tensor::from_vec(values, e.shape.as_slice(), &Device::Cpu)?));
    }
    Ok(Checkpoint {
        meta: header.meta,
        tensors,
    })
}
