//! Coarse-to-fine fusion over a chain of inference scales.
//!
//! Adjacent scales combine as
//! `out = U(lower) * U(alpha_lower) + higher * (1 - U(alpha_lower))`,
//! where `U` is the bilinear resize onto the higher scale's grid. The chain
//! folds this from the coarsest scale upward, carrying the running result
//! as the next step's lower operand.

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, gated_blend, AttentionMap, LogitMap};

/// Fused logits of one scale and the gate it applies to the next finer one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEntry {
    pub scale: f64,
    pub logits: LogitMap,
    pub alpha: AttentionMap,
}

impl ScaleEntry {
    pub fn new(scale: f64, logits: LogitMap, alpha: AttentionMap) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must be positive"
            )));
        }
        if (logits.height(), logits.width()) != alpha.dims() {
            return Err(Error::Shape(format!(
                "scale {scale}: logits {}x{} vs alpha {:?}",
                logits.height(),
                logits.width(),
                alpha.dims()
            )));
        }
        Ok(Self {
            scale,
            logits,
            alpha,
        })
    }
}

/// Scale entries ordered coarse to fine.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleChain {
    entries: Vec<ScaleEntry>,
}

impl ScaleChain {
    pub fn new(entries: Vec<ScaleEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("scale chain is empty".into()));
        }
        if entries.windows(2).any(|w| !(w[0].scale < w[1].scale)) {
            return Err(Error::InvalidArgument(
                "scale chain must be strictly increasing".into(),
            ));
        }
        let channels = entries[0].logits.channels();
        if entries.iter().any(|e| e.logits.channels() != channels) {
            return Err(Error::Shape("scale chain channel counts differ".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScaleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn fuse_adjacent_scales(lower: &ScaleEntry, higher_logits: &LogitMap) -> Result<LogitMap> {
    if lower.logits.channels() != higher_logits.channels() {
        return Err(Error::Shape(format!(
            "fuse_adjacent_scales: {} vs {} channels",
            lower.logits.channels(),
            higher_logits.channels()
        )));
    }
    if (lower.logits.height(), lower.logits.width()) != lower.alpha.dims() {
        return Err(Error::Shape(
            "fuse_adjacent_scales: lower alpha/logits mismatch".into(),
        ));
    }
    let (h, w) = (higher_logits.height(), higher_logits.width());
    let up = bilinear_resize(&lower.logits, h, w)?;
    let gate = lower.alpha.resize(h, w)?;
    gated_blend(&up, higher_logits, &gate)
}

/// Fold the chain coarse to fine; the result lives on the finest grid.
pub fn run_inference_chain(chain: &ScaleChain) -> Result<LogitMap> {
    let (first, rest) = chain
        .entries
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("scale chain is empty".into()))?;
    let mut acc = first.logits.clone();
    let mut gate = &first.alpha;
    let mut scale = first.scale;
    for entry in rest {
        let lower = ScaleEntry {
            scale,
            logits: acc,
            alpha: gate.clone(),
        };
        acc = fuse_adjacent_scales(&lower, &entry.logits)?;
        gate = &entry.alpha;
        scale = entry.scale;
    }
    Ok(acc)
}
