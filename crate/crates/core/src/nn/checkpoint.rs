//! Versioned binary checkpoint container.
//!
//! Layout: 8-byte magic, u32 version, u64 header length, JSON header
//! (model spec, tensor name/shape table, serialized RNG state, free-form
//! metadata), then every tensor's values as little-endian f64 in header
//! order. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelSpec, Params, Tensor};
use super::tape::NnError;

const MAGIC: &[u8; 8] = b"SICLCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<TensorMeta>,
    rng: ChaCha8Rng,
    meta: serde_json::Value,
}

/// A complete restorable training or evaluation state.
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: Params,
    pub rng: ChaCha8Rng,
    /// Free-form run metadata (multiplier, step counter, config echo).
    pub meta: serde_json::Value,
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    let header = Header {
        spec: ckpt.spec.clone(),
        tensors: ckpt
            .params
            .entries
            .iter()
            .map(|(name, t)| TensorMeta { name: name.clone(), rows: t.rows, cols: t.cols })
            .collect(),
        rng: ckpt.rng.clone(),
        meta: ckpt.meta.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| NnError::Checkpoint(format!("header encode: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in &ckpt.params.entries {
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header_bytes = vec![0u8; len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| NnError::Checkpoint(format!("header decode: {e}")))?;
    let mut entries = Vec::with_capacity(header.tensors.len());
    for tm in &header.tensors {
        let n = tm.rows * tm.cols;
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push((tm.name.clone(), Tensor { rows: tm.rows, cols: tm.cols, data }));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok(Checkpoint {
        spec: header.spec,
        params: Params { entries },
        rng: header.rng,
        meta: header.meta,
    })
}
