//! Raw tensor files.
//!
//! Layout, all little-endian:
//!
//! | offset | size        | field                          |
//! |--------|-------------|--------------------------------|
//! | 0      | 8           | magic `SGFTENS\0`              |
//! | 8      | 4           | height (u32)                   |
//! | 12     | 4           | width (u32)                    |
//! | 16     | 4           | channels (u32)                 |
//! | 20     | 4           | reserved, must be 0            |
//! | 24     | 4·h·w·c     | f32 values, row-major, channel-minor |
//!
//! Attention maps are stored with `channels = 1`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{AttentionMap, LogitMap};

pub const TENSOR_MAGIC: &[u8; 8] = b"SGFTENS\0";
const HEADER_LEN: usize = 24;

pub fn encode_tensor(height: usize, width: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    debug_assert_eq!(data.len(), height * width * channels);
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    for v in [height, width, channels, 0] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a tensor file into `(height, width, channels, values)`.
pub fn decode_tensor(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "tensor file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic".into()));
    }
    let field = |i: usize| {
        let at = 8 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize
    };
    let (h, w, c, reserved) = (field(0), field(1), field(2), field(3));
    if reserved != 0 {
        return Err(Error::Format(format!(
            "reserved header field is {reserved}, expected 0"
        )));
    }
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Format(format!(
            "tensor dims {h}x{w}x{c} must be positive"
        )));
    }
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("tensor dims overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header {h}x{w}x{c} needs {expected}",
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("payload value {i} is not finite")));
    }
    Ok((h, w, c, values))
}

fn read(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}

pub fn save_logits(path: &Path, map: &LogitMap) -> Result<()> {
    let (h, w, c) = map.dims();
    super::write_bytes(path, &encode_tensor(h, w, c, map.data()))
}

pub fn load_logits(path: &Path) -> Result<LogitMap> {
    let (h, w, c, data) = read(path)?;
    LogitMap::new(h, w, c, data)
}

pub fn save_attention(path: &Path, map: &AttentionMap) -> Result<()> {
    super::write_bytes(
        path,
        &encode_tensor(map.height(), map.width(), 1, map.data()),
    )
}

pub fn load_attention(path: &Path) -> Result<AttentionMap> {
    let (h, w, c, data) = read(path)?;
    if c != 1 {
        return Err(Error::data(
            path.display().to_string(),
            format!("attention map must have 1 channel, found {c}"),
        ));
    }
    AttentionMap::new(h, w, data)
        .map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}
