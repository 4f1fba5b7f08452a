//! Binary PPM (P6) label overlays.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::LabelGrid;

/// RGB per label: background, shell, meat, gonad, muscle.
pub const PALETTE: [[u8; 3]; 5] = [
    [0, 0, 0],
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
];

pub fn encode_overlay(labels: &LabelGrid) -> Result<Vec<u8>> {
    if labels.labels.len() != labels.height * labels.width {
        return Err(Error::Shape(
            "label grid length does not match its dims".into(),
        ));
    }
    let header = format!("P6\n{} {}\n255\n", labels.width, labels.height);
    let mut out = Vec::with_capacity(header.len() + labels.labels.len() * 3);
    out.extend_from_slice(header.as_bytes());
    for (i, &l) in labels.labels.iter().enumerate() {
        let rgb = PALETTE.get(l as usize).ok_or_else(|| {
            Error::InvalidArgument(format!("label {l} at pixel {i} has no overlay colour"))
        })?;
        out.extend_from_slice(rgb);
    }
    Ok(out)
}

pub fn write_overlay(path: &Path, labels: &LabelGrid) -> Result<()> {
    let bytes = encode_overlay(labels)?;
    super::write_bytes(path, &bytes)
}
