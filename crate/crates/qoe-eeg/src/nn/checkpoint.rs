//! Model checkpoint file format.
//!
//! Layout: an 8-byte magic, a little-endian u64 header length, a JSON header
//! (format version, architecture, config, seed, tensor manifest), then every
//! parameter value as little-endian f64 in manifest order. Offsets are in
//! f64 elements from the start of the payload. Loading validates the
//! manifest against the layout declared by [`param_spec`] for the embedded
//! config, so a checkpoint can never silently disagree with the code that
//! consumes it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::atomic_write;
use crate::nn::model::{param_spec, Architecture, ModelConfig, TrainedModel};
use crate::nn::tensor::{Param, Params, Tensor};
use crate::nn::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QEEGCKPT";
const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 1 << 20;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: Architecture,
    config: ModelConfig,
    seed: u64,
    manifest: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn bad(detail: impl Into<String>) -> NnError {
    NnError::BadCheckpoint { detail: detail.into() }
}

/// Serializes a model to bytes; see the module docs for the layout.
pub fn checkpoint_bytes(model: &TrainedModel) -> Result<Vec<u8>, NnError> {
    let mut manifest = Vec::with_capacity(model.params.len());
    let mut offset = 0usize;
    for p in model.params.iter() {
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.tensor.shape.clone(),
            offset,
        });
        offset += p.tensor.numel();
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        architecture: model.config.architecture,
        config: model.config.clone(),
        seed: model.seed,
        manifest,
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;

    let mut out = Vec::with_capacity(16 + header_json.len() + offset * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for p in model.params.iter() {
        for v in &p.tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<(), NnError> {
    let bytes = checkpoint_bytes(model)?;
    atomic_write(path, &bytes).map_err(|source| NnError::Io { path: path.to_path_buf(), source })
}

/// Parses and fully validates checkpoint bytes.
pub fn parse_checkpoint_bytes(bytes: &[u8]) -> Result<TrainedModel, NnError> {
    if bytes.len() < 16 {
        return Err(bad(format!("{} bytes is shorter than the fixed prefix", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("magic bytes do not match"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if header_len > MAX_HEADER_BYTES {
        return Err(bad(format!("header length {header_len} exceeds the limit")));
    }
    let header_end = 16 + header_len as usize;
    if bytes.len() < header_end {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| bad(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", header.format_version)));
    }
    if header.architecture != header.config.architecture {
        return Err(bad(format!(
            "architecture field {} disagrees with config {}",
            header.architecture, header.config.architecture
        )));
    }

    let spec = param_spec(&header.config)?;
    if spec.len() != header.manifest.len() {
        return Err(bad(format!(
            "manifest has {} tensors, config declares {}",
            header.manifest.len(),
            spec.len()
        )));
    }
    let mut expected_offset = 0usize;
    for (entry, s) in header.manifest.iter().zip(&spec) {
        if entry.name != s.name {
            return Err(bad(format!("tensor {} where {} was declared", entry.name, s.name)));
        }
        if entry.shape != s.shape {
            return Err(bad(format!(
                "tensor {} shaped {:?}, declared {:?}",
                entry.name, entry.shape, s.shape
            )));
        }
        if entry.offset != expected_offset {
            return Err(bad(format!(
                "tensor {} at offset {}, expected {expected_offset}",
                entry.name, entry.offset
            )));
        }
        expected_offset += s.numel();
    }

    let payload = &bytes[header_end..];
    if payload.len() != expected_offset * 8 {
        return Err(bad(format!(
            "payload holds {} bytes, manifest declares {} values",
            payload.len(),
            expected_offset
        )));
    }

    let mut params = Params::new();
    let mut cursor = payload;
    for s in spec {
        let numel = s.numel();
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            let v = f64::from_le_bytes(cursor[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(bad(format!("non-finite value in tensor {}", s.name)));
            }
            data.push(v);
        }
        cursor = &cursor[numel * 8..];
        params.push(Param {
            name: s.name,
            tensor: Tensor { shape: s.shape, data },
            trainable: s.trainable,
            regularized: s.regularized,
        });
    }
    Ok(TrainedModel { config: header.config, seed: header.seed, params })
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel, NnError> {
    let bytes = std::fs::read(path)
        .map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
    parse_checkpoint_bytes(&bytes)
}
