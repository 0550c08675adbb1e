//! Flat binary parameter checkpoints.
//!
//! Layout, all little-endian: the 8-byte magic `HCGSTCKP`, a `u32` format
//! version, then `input_dim`, `hidden`, `classes` and `seed` as `u64`, then
//! every tensor of [`ModelParams::tensors`] in order as row-major `f64`.

use std::fs;
use std::path::Path;

use hcgst_core::model::{init_params, ModelParams};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HCGSTCKP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 * 8;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [params.input_dim, params.hidden, params.classes] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    out.extend_from_slice(&params.seed.to_le_bytes());
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ModelParams, String> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4-byte slice"));
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let dim = |i: usize| usize::try_from(u64_at(bytes, 12 + 8 * i)).map_err(|e| e.to_string());
    let (d, h, c) = (dim(0)?, dim(1)?, dim(2)?);
    let seed = u64_at(bytes, 36);
    let mut params = init_params(d, h, c, seed).map_err(|e| e.to_string())?;
    let expected = HEADER_LEN + 8 * params.parameter_count();
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    let mut at = HEADER_LEN;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
            at += 8;
        }
    }
    Ok(params)
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(Error::write(path))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(Error::read(path))?;
    decode(&bytes).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = init_params(3, 4, 2, 9).unwrap();
        assert_eq!(decode(&encode(&p)).unwrap(), p);
    }

    #[test]
    fn rejects_bad_input() {
        let p = init_params(3, 4, 2, 9).unwrap();
        let mut bytes = encode(&p);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        let mut bytes = encode(&p);
        bytes[8] = 7;
        assert!(decode(&bytes).unwrap_err().contains("version"));
    }
}
