//! Binary checkpoints.
//!
//! Layout: the magic bytes `GMF5`, a little-endian `u32` version (1), a
//! little-endian `u64` length, that many bytes of UTF-8 JSON metadata, then
//! the raw little-endian `f32` data of every tensor in directory order.
//! The directory lists parameters and batch-norm buffers in the model's
//! visit order together with their shapes and byte offsets into the data
//! section; the metadata also carries a CRC-32 of the data section.

use std::path::Path;

use gmf_core::data::PreprocessConfig;
use gmf_core::model::{Model, ModelSpec};
use gmf_core::nn::{Module, TensorKind};
use gmf_core::train::EpochMetrics;
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

pub const MAGIC: &[u8; 4] = b"GMF5";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("file truncated: needs {needed} bytes, has {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("checkpoint stores {found} tensors but the model has {expected}")]
    TensorCountMismatch { expected: usize, found: usize },
    #[error("tensor {index} is {found}, model expects {expected}")]
    TensorMismatch { index: usize, expected: String, found: String },
    #[error("tensor data checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("{0} unexpected bytes after the tensor data")]
    TrailingData(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    /// Byte offset into the data section.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model: ModelSpec,
    preprocess: PreprocessConfig,
    epoch: usize,
    metrics: Vec<EpochMetrics>,
    tensors: Vec<TensorEntry>,
    data_crc32: u32,
}

/// Everything stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CheckpointMeta {
    pub preprocess: PreprocessConfig,
    /// Epoch the weights come from; 0 for an untrained model.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub meta: CheckpointMeta,
}

fn directory(model: &Model<f32>) -> (Vec<TensorEntry>, Vec<u8>) {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    model.visit(&mut |name, kind, t| {
        entries.push(TensorEntry { name: name.to_string(), kind, shape: t.shape().to_vec(), offset: data.len() as u64 });
        t.data().iter().for_each(|v| data.extend_from_slice(&v.to_le_bytes()));
    });
    (entries, data)
}

/// Serializes a model and its metadata.
pub fn to_bytes(model: &Model<f32>, meta: &CheckpointMeta) -> Vec<u8> {
    let (tensors, data) = directory(model);
    let md = Metadata {
        model: model.spec().clone(),
        preprocess: meta.preprocess.clone(),
        epoch: meta.epoch,
        metrics: meta.metrics.clone(),
        tensors,
        data_crc32: crc32fast::hash(&data),
    };
    let json = serde_json::to_vec(&md).expect("metadata is plain data");
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

fn describe(name: &str, kind: TensorKind, shape: &[usize]) -> String {
    format!("{name} ({kind:?}) {shape:?}")
}

/// Parses a checkpoint. Nothing is returned unless every check passes.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let available = bytes.len() as u64;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(if MAGIC.starts_with(bytes) {
            CheckpointError::Truncated { needed: HEADER_LEN as u64, available }
        } else {
            CheckpointError::BadMagic
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated { needed: HEADER_LEN as u64, available });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let data_start = (HEADER_LEN as u64).saturating_add(json_len);
    if data_start > available {
        return Err(CheckpointError::Truncated { needed: data_start, available });
    }
    let data_start = data_start as usize;
    let md: Metadata = serde_json::from_slice(&bytes[HEADER_LEN..data_start]).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let mut model = Model::<f32>::build_uninit(&md.model).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let expected = model.tensor_names();
    if expected.len() != md.tensors.len() {
        return Err(CheckpointError::TensorCountMismatch { expected: expected.len(), found: md.tensors.len() });
    }
    let mut offset = 0u64;
    for (index, ((name, kind, shape), entry)) in expected.iter().zip(&md.tensors).enumerate() {
        if *name != entry.name || *kind != entry.kind || *shape != entry.shape || entry.offset != offset {
            return Err(CheckpointError::TensorMismatch {
                index,
                expected: format!("{} at byte {offset}", describe(name, *kind, shape)),
                found: format!("{} at byte {}", describe(&entry.name, entry.kind, &entry.shape), entry.offset),
            });
        }
        offset += 4 * shape.iter().product::<usize>() as u64;
    }
    let data = &bytes[data_start..];
    let needed = data_start as u64 + offset;
    if (data.len() as u64) < offset {
        return Err(CheckpointError::Truncated { needed, available });
    }
    if data.len() as u64 > offset {
        return Err(CheckpointError::TrailingData(data.len() as u64 - offset));
    }
    let computed = crc32fast::hash(data);
    if computed != md.data_crc32 {
        return Err(CheckpointError::ChecksumMismatch { stored: md.data_crc32, computed });
    }
    let mut values = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    model.visit_mut(&mut |_, _, t| t.data_mut().iter_mut().for_each(|v| *v = values.next().expect("length checked")));
    let meta = CheckpointMeta { preprocess: md.preprocess, epoch: md.epoch, metrics: md.metrics };
    Ok(Checkpoint { model, meta })
}

pub fn save_checkpoint(model: &Model<f32>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    error::write(path, &to_bytes(model, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = error::read(path)?;
    from_bytes(&bytes).map_err(|source| Error::Checkpoint { path: path.to_path_buf(), source })
}
