//! SMPT sampling tensor files.
//!
//! Layout (little-endian): magic `SMPT`, version `u16`, height `u32`, width
//! `u32`, then `2 * h * w` `f64` values, channel-major then row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use adsample_core::SamplingTensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SMPT";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode(tensor: &SamplingTensor) -> Vec<u8> {
    let (h, w) = tensor.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * h * w);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for v in tensor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses and validates a tensor; the covering constraints must hold exactly.
pub fn decode(bytes: &[u8]) -> Result<SamplingTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("missing SMPT magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let h = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(16))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("tensor size {h}x{w} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes for {h}x{w}, found {}", bytes.len())));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SamplingTensor::from_values(h, w, values)?)
}

pub fn write(path: &Path, tensor: &SamplingTensor) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(tensor)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<SamplingTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
