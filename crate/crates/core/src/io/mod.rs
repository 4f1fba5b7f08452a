//! On-disk formats: raw tensors, JSON manifests, and PPM overlays.

pub mod manifest;
pub mod overlay;
pub mod tensor_file;

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use manifest::{load_manifest, save_bundle, InstanceRecord, ManifestDoc, SCHEMA_VERSION};
pub use overlay::{encode_overlay, write_overlay, PALETTE};
pub use tensor_file::{
    decode_tensor, encode_tensor, load_attention, load_logits, save_attention, save_logits,
    TENSOR_MAGIC,
};

/// Pretty JSON with a trailing newline. Output is deterministic for a given value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Write a file, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
