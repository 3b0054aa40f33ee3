//! `FUSESR01` weight container.
//!
//! Layout: 8-byte magic, `u64` little-endian header length, UTF-8 JSON header
//! listing every tensor, then the raw little-endian scalar blocks. Offsets in
//! the header are relative to the start of the data section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::HNetConfig;
use super::model::HNetModel;
use crate::error::{FuseError, Result};
use crate::tensor::{DType, Scalar, Shape, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"FUSESR01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
    pub dtype: DType,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub tensors: Vec<TensorEntry>,
}

/// Serialize named tensors into a FUSESR01 container.
pub fn tensors_to_bytes<T: Scalar>(named: &[(String, &Tensor<T>)]) -> Vec<u8> {
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in named {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().as_array(),
            dtype: T::DTYPE,
            offset: data.len() as u64,
        });
        for v in t.data() {
            v.write_le(&mut data);
        }
    }
    let header = serde_json::to_vec(&WeightsHeader { tensors }).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + data.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    out
}

/// Parse a FUSESR01 container into named tensors, converting to `T`.
pub fn tensors_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    if bytes.len() < 16 || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(FuseError::Format("missing FUSESR01 magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| FuseError::Format("truncated weight header".into()))?;
    let header: WeightsHeader = serde_json::from_slice(&bytes[16..data_start])
        .map_err(|e| FuseError::Format(format!("bad weight header: {e}")))?;
    let data = &bytes[data_start..];
    let mut out = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let shape = Shape::from(entry.shape);
        let start = entry.offset as usize;
        let end = shape
            .numel()
            .checked_mul(entry.dtype.size())
            .and_then(|n| n.checked_add(start))
            .filter(|&e| e <= data.len())
            .ok_or_else(|| FuseError::Format(format!("layer {}: data truncated", entry.name)))?;
        let block = &data[start..end];
        let values: Vec<T> = match entry.dtype {
            DType::F32 => block.chunks_exact(4).map(|c| T::lit(f32::read_le(c) as f64)).collect(),
            DType::F64 => block.chunks_exact(8).map(|c| T::lit(f64::read_le(c))).collect(),
        };
        out.push((entry.name, Tensor::from_vec(shape, values)?));
    }
    Ok(out)
}

pub fn weights_to_bytes<T: Scalar>(model: &HNetModel<T>) -> Vec<u8> {
    tensors_to_bytes(&model.params())
}

/// Parse a container and check it against the layer shapes `config` implies.
pub fn weights_from_bytes<T: Scalar>(bytes: &[u8], config: &HNetConfig) -> Result<HNetModel<T>> {
    let loaded = tensors_from_bytes::<T>(bytes)?;
    let mut model = HNetModel::<T>::zeros(config.clone())?;
    let expected: Vec<(String, Shape)> = model.params().into_iter().map(|(n, t)| (n, t.shape())).collect();
    if loaded.len() != expected.len() {
        return Err(FuseError::Format(format!(
            "file holds {} tensors, config expects {}",
            loaded.len(),
            expected.len()
        )));
    }
    for (((file_name, t), (name, shape)), dst) in loaded.into_iter().zip(&expected).zip(model.params_mut()) {
        if &file_name != name {
            return Err(FuseError::Format(format!("expected layer {name}, found {file_name}")));
        }
        if t.shape() != *shape {
            return Err(FuseError::Format(format!(
                "layer {name}: file shape {} does not match config shape {shape}",
                t.shape()
            )));
        }
        *dst = t;
    }
    Ok(model)
}

pub fn save_weights<T: Scalar>(model: &HNetModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, weights_to_bytes(model)).map_err(|e| FuseError::io(path, e))
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>, config: &HNetConfig) -> Result<HNetModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FuseError::io(path, e))?;
    weights_from_bytes(&bytes, config)
}

/// Writes `model.json` and `weights.bin` into `dir`.
pub fn save_model_dir<T: Scalar>(model: &HNetModel<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| FuseError::io(dir, e))?;
    let cfg = dir.join("model.json");
    std::fs::write(&cfg, model.config().to_json()).map_err(|e| FuseError::io(&cfg, e))?;
    save_weights(model, dir.join("weights.bin"))
}

pub fn load_model_dir<T: Scalar>(dir: impl AsRef<Path>) -> Result<HNetModel<T>> {
    let dir = dir.as_ref();
    let cfg = dir.join("model.json");
    let text = std::fs::read_to_string(&cfg).map_err(|e| FuseError::io(&cfg, e))?;
    let config = HNetConfig::from_json(&text)?;
    load_weights(dir.join("weights.bin"), &config)
}
