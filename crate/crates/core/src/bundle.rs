//! In-memory predictions for one image across models and scales.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mask::{BBox, MaskInstance};
use crate::tensor::{AttentionMap, LogitMap};

/// Everything known about one image: per-(model, scale) full-frame logits,
/// optional per-scale global attention, per-object crop regions and crop
/// logits, predicted instances, and ground truth.
///
/// Scales are referenced by index into `scales`. Instance masks always live
/// on the full `height x width` image grid; logit maps live on the grid of
/// their scale (see [`PredictionBundle::scale_grid`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionBundle {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// Ascending, unique.
    pub models: Vec<String>,
    /// Strictly increasing.
    pub scales: Vec<f64>,
    pub global_logits: BTreeMap<(String, usize), LogitMap>,
    pub alphas: BTreeMap<usize, AttentionMap>,
    /// Crop region of each object in image coordinates.
    pub crops: BTreeMap<u32, BBox>,
    pub local_logits: BTreeMap<(String, usize, u32), LogitMap>,
    pub instances: Vec<MaskInstance>,
    pub ground_truth: Vec<MaskInstance>,
}

/// Grid of an image rendered at `scale`: each side rounded, at least 1.
pub fn scale_grid(height: usize, width: usize, scale: f64) -> (usize, usize) {
    let side = |n: usize| ((n as f64 * scale).round() as usize).max(1);
    (side(height), side(width))
}

impl PredictionBundle {
    pub fn scale_index(&self, scale: f64) -> Option<usize> {
        self.scales.iter().position(|&s| s == scale)
    }

    pub fn scale_grid(&self, scale_idx: usize) -> (usize, usize) {
        scale_grid(self.height, self.width, self.scales[scale_idx])
    }

    pub fn instances_at(&self, scale: f64) -> Vec<MaskInstance> {
        self.instances
            .iter()
            .filter(|i| i.scale == scale)
            .cloned()
            .collect()
    }

    /// Object ids named by crops, predictions, or ground truth.
    pub fn object_ids(&self) -> Vec<u32> {
        self.crops
            .keys()
            .copied()
            .chain(self.instances.iter().filter_map(|i| i.object_id))
            .chain(self.ground_truth.iter().filter_map(|i| i.object_id))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Check cross-field invariants. Loading runs this eagerly.
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.classes == 0 {
            return Err(Error::data(
                "image",
                "height, width and classes must be positive",
            ));
        }
        if self.models.is_empty() {
            return Err(Error::data("models", "at least one model is required"));
        }
        if self.models.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::data(
                "models",
                "model ids must be unique and ascending",
            ));
        }
        if self.scales.is_empty() {
            return Err(Error::data("scales", "at least one scale is required"));
        }
        if self.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::data("scales", "scales must be positive"));
        }
        if self.scales.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::data("scales", "scales must be strictly increasing"));
        }
        for ((model, s), map) in &self.global_logits {
            let record = format!("logits[model={model}, scale={}]", self.scales[*s]);
            if !self.models.contains(model) {
                return Err(Error::data(record, "unknown model"));
            }
            let (h, w) = self.scale_grid(*s);
            if map.dims() != (h, w, self.classes) {
                return Err(Error::data(
                    record,
                    format!(
                        "dims {:?} but scale grid is {h}x{w}x{}",
                        map.dims(),
                        self.classes
                    ),
                ));
            }
        }
        for (s, alpha) in &self.alphas {
            let grid = self.scale_grid(*s);
            if alpha.dims() != grid {
                return Err(Error::data(
                    format!("alphas[scale={}]", self.scales[*s]),
                    format!("dims {:?} but scale grid is {grid:?}", alpha.dims()),
                ));
            }
        }
        for (id, b) in &self.crops {
            if !b.fits(self.height, self.width) {
                return Err(Error::data(
                    format!("crops[object_id={id}]"),
                    format!("{b} exceeds the image"),
                ));
            }
        }
        for ((model, s, obj), map) in &self.local_logits {
            let record = format!(
                "local_logits[model={model}, scale={}, object_id={obj}]",
                self.scales[*s]
            );
            if !self.models.contains(model) {
                return Err(Error::data(record, "unknown model"));
            }
            if !self.crops.contains_key(obj) {
                return Err(Error::data(record, "object has no crop region"));
            }
            if map.channels() != self.classes {
                return Err(Error::data(
                    record,
                    format!("{} channels, expected {}", map.channels(), self.classes),
                ));
            }
        }
        for (what, list) in [
            ("instances", &self.instances),
            ("ground_truth", &self.ground_truth),
        ] {
            for (i, inst) in list.iter().enumerate() {
                let record = format!("{what}[{i}]");
                inst.validate().map_err(|e| e.at(record.clone()))?;
                if inst.mask.dims() != (self.height, self.width) {
                    return Err(Error::data(record, "mask dims differ from the image"));
                }
                if what == "instances" {
                    if !self.models.contains(&inst.model_id) {
                        return Err(Error::data(
                            record,
                            format!("unknown model {:?}", inst.model_id),
                        ));
                    }
                    if self.scale_index(inst.scale).is_none() {
                        return Err(Error::data(
                            record,
                            format!("scale {} is not listed", inst.scale),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
