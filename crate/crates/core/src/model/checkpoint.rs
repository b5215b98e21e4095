//! `DARCK1` checkpoint files: magic, u32 header length, JSON header
//! (config plus tensor manifest), raw little-endian `f32` payload, and a
//! CRC32 of the payload.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::numerics::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"DARCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset from the start of the payload.
    pub offset: usize,
    pub trainable: bool,
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub fingerprint: String,
    pub tensors: Vec<TensorEntry>,
}

/// Short hex digest of any serializable value's canonical JSON.
pub fn fingerprint_of<T: Serialize>(value: &T) -> String {
    fingerprint_bytes(&serde_json::to_vec(value).expect("serializable"))
}

/// Short hex digest of raw bytes.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes)[..8])
}

pub fn config_fingerprint(config: &ModelConfig) -> String {
    fingerprint_of(config)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut tensors = Vec::with_capacity(params.store.len());
    let mut payload = ByteWriter::new();
    for p in params.store.iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: [p.value.nrows(), p.value.ncols()],
            offset: payload.len(),
            trainable: p.trainable,
            decay: p.decay,
        });
        for v in p.value.iter() {
            payload.f32(*v as f32);
        }
    }
    let header = CheckpointHeader {
        config: params.config.clone(),
        fingerprint: config_fingerprint(&params.config),
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(json.len() as u32);
    w.bytes(&json);
    w.bytes(payload.as_slice());
    w.u32(crc32fast::hash(payload.as_slice()));
    w.write_to(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(CHECKPOINT_MAGIC)?;
    let hlen = r.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    let start = r.pos();
    let mut store = ParamStore::new();
    for t in &header.tensors {
        if r.pos() - start != t.offset {
            return Err(Error::format(
                path,
                format!("tensor `{}` offset mismatch", t.name),
            ));
        }
        let n = t.shape[0] * t.shape[1];
        let vals = (0..n)
            .map(|_| r.f32().map(|v| v as f64))
            .collect::<Result<Vec<_>>>()?;
        let value = Array2::from_shape_vec((t.shape[0], t.shape[1]), vals).expect("length checked");
        store.insert(t.name.clone(), value, t.trainable, t.decay)?;
    }
    let end = r.pos();
    let crc = r.u32()?;
    r.finish()?;
    if crc32fast::hash(&bytes[start..end]) != crc {
        return Err(Error::format(path, "checksum mismatch"));
    }
    if config_fingerprint(&header.config) != header.fingerprint {
        return Err(Error::format(path, "config fingerprint mismatch"));
    }
    let params = ModelParams::from_store(header.config.clone(), store)?;
    Ok((header, params))
}
