//! LPT1 binary tensors: magic `LPT1`, `u32` rank, `rank × u32` dims, then
//! `f32` row-major payload, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use locprior_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LPT1";

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.dims().len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a complete LPT1 buffer. Errors are plain messages; callers attach
/// the path.
pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut words = bytes.get(4..).unwrap_or(&[]).chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err("missing LPT1 magic".into());
    }
    let rank = words.next().ok_or("truncated header")? as usize;
    if bytes.len() < 8 + 4 * rank {
        return Err(format!("truncated header: rank {rank}"));
    }
    let dims: Vec<usize> = (&mut words).take(rank).map(|d| d as usize).collect();
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or("dims overflow")?;
    let payload = &bytes[8 + 4 * rank..];
    if payload.len() != count.saturating_mul(4) {
        return Err(format!("payload has {} bytes, dims {dims:?} need {}", payload.len(), count * 4));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Tensor::new(dims, data).map_err(|e| e.to_string())
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(t)).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}
