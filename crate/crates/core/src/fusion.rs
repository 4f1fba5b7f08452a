//! AP-weighted ensemble fusion of masks and logit maps.
//!
//! Every model gets the coefficient `NormalizedAP_i / sum_j NormalizedAP_j`
//! within a group, and fused values are the weighted sum of the members.
//! Sums always run in ascending `model_id` order so a permuted input
//! produces bit-identical output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{rle_decode, BinaryMask, Component, MaskInstance};
use crate::metrics::{normalize_ap, ApTable, GroupKey, GroupingMode, Normalization};
use crate::tensor::LogitMap;

/// Model id given to fused instances.
pub const ENSEMBLE_MODEL_ID: &str = "ensemble";

/// Per-model fusion coefficients of one group, ascending by model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub group: GroupKey,
    pub weights: Vec<ModelWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub model: String,
    pub weight: f64,
}

impl FusionWeights {
    /// Equal weights over `models`.
    pub fn uniform(group: GroupKey, models: &[String]) -> Result<Self> {
        let models = sorted_models(models)?;
        let w = 1.0 / models.len() as f64;
        Ok(Self {
            group,
            weights: models
                .into_iter()
                .map(|model| ModelWeight { model, weight: w })
                .collect(),
        })
    }

    /// Build from explicit `(model, weight)` pairs; weights must be
    /// nonnegative and sum to 1 within 1e-9.
    pub fn from_pairs(group: GroupKey, pairs: &[(&str, f64)]) -> Result<Self> {
        let mut weights: Vec<ModelWeight> = pairs
            .iter()
            .map(|&(m, w)| ModelWeight {
                model: m.to_owned(),
                weight: w,
            })
            .collect();
        weights.sort_by(|a, b| a.model.cmp(&b.model));
        if weights.windows(2).any(|w| w[0].model == w[1].model) {
            return Err(Error::InvalidArgument("duplicate model in weights".into()));
        }
        if weights.iter().any(|w| !(w.weight >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().map(|w| w.weight).sum();
        if weights.is_empty() || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { group, weights })
    }

    pub fn get(&self, model: &str) -> Option<f64> {
        self.weights
            .iter()
            .find(|w| w.model == model)
            .map(|w| w.weight)
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.weights.iter().map(|w| w.model.as_str())
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|w| w.weight).sum()
    }
}

fn sorted_models(models: &[String]) -> Result<Vec<String>> {
    let mut models = models.to_vec();
    models.sort();
    models.dedup();
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to weight".into()));
    }
    Ok(models)
}

/// Weights for `group` from each model's AP. When every normalized AP is 0
/// the weights fall back to uniform.
pub fn compute_weights(
    table: &ApTable,
    group: GroupKey,
    models: &[String],
    mode: Normalization,
) -> Result<FusionWeights> {
    let models = sorted_models(models)?;
    let aps = models
        .iter()
        .map(|m| {
            table.get(m, group).ok_or_else(|| {
                Error::data(
                    format!("ap_table[{m}, {group}]"),
                    "missing AP entry for weighting",
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let normalized = normalize_ap(&aps, mode)?;
    let total: f64 = normalized.iter().sum();
    if total == 0.0 {
        return FusionWeights::uniform(group, &models);
    }
    Ok(FusionWeights {
        group,
        weights: models
            .into_iter()
            .zip(normalized)
            .map(|(model, n)| ModelWeight {
                model,
                weight: n / total,
            })
            .collect(),
    })
}

/// Dense `height x width` grid of mask probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Shape(format!(
                "soft mask {height}x{width} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invariant(
                "soft mask values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_binary(m: &BinaryMask) -> Self {
        Self {
            height: m.height(),
            width: m.width(),
            data: m
                .bits()
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Order `inputs` to match `weights` (ascending model id), requiring an
/// exact one-to-one cover.
fn align<'a, T>(inputs: &[(&str, &'a T)], weights: &FusionWeights) -> Result<Vec<(&'a T, f64)>> {
    if inputs.len() != weights.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs for {} weighted models",
            inputs.len(),
            weights.weights.len()
        )));
    }
    let by_model: BTreeMap<&str, &'a T> = inputs.iter().map(|&(m, v)| (m, v)).collect();
    if by_model.len() != inputs.len() {
        return Err(Error::InvalidArgument(
            "duplicate model among fusion inputs".into(),
        ));
    }
    weights
        .weights
        .iter()
        .map(|w| {
            by_model
                .get(w.model.as_str())
                .map(|v| (*v, w.weight))
                .ok_or_else(|| Error::InvalidArgument(format!("no input for model {}", w.model)))
        })
        .collect()
}

/// Weighted average of aligned per-model values, accumulated in `f64`.
fn weighted_sum(members: &[(&[f32], f64)], len: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; len];
    for &(values, w) in members {
        for (a, &v) in acc.iter_mut().zip(values) {
            *a += w * f64::from(v);
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}

pub fn fuse_masks(masks: &[(&str, &SoftMask)], weights: &FusionWeights) -> Result<SoftMask> {
    let members = align(masks, weights)?;
    let dims = members[0].0.dims();
    if let Some((m, _)) = members.iter().find(|(m, _)| m.dims() != dims) {
        return Err(Error::Shape(format!(
            "fuse_masks: {:?} vs {:?}",
            m.dims(),
            dims
        )));
    }
    let slices: Vec<_> = members.iter().map(|(m, w)| (m.data(), *w)).collect();
    let data = weighted_sum(&slices, dims.0 * dims.1);
    Ok(SoftMask {
        height: dims.0,
        width: dims.1,
        data,
    })
}

pub fn fuse_logits(maps: &[(&str, &LogitMap)], weights: &FusionWeights) -> Result<LogitMap> {
    let members = align(maps, weights)?;
    let dims = members[0].0.dims();
    if let Some((m, _)) = members.iter().find(|(m, _)| m.dims() != dims) {
        return Err(Error::Shape(format!(
            "fuse_logits: {:?} vs {:?}",
            m.dims(),
            dims
        )));
    }
    let slices: Vec<_> = members.iter().map(|(m, w)| (m.data(), *w)).collect();
    let data = weighted_sum(&slices, dims.0 * dims.1 * dims.2);
    LogitMap::new(dims.0, dims.1, dims.2, data)
}

/// Bit set where the soft value is at least `threshold`.
pub fn binarize(soft: &SoftMask, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "binarization threshold {threshold} must lie in (0, 1)"
        )));
    }
    BinaryMask::new(
        soft.height,
        soft.width,
        soft.data
            .iter()
            .map(|&v| f64::from(v) >= threshold)
            .collect(),
    )
}

/// Predictions pooled under one group key.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGroup {
    pub key: GroupKey,
    /// Sorted by score descending, ties by model id.
    pub members: Vec<MaskInstance>,
}

pub fn group_predictions(instances: &[MaskInstance], mode: GroupingMode) -> Result<Vec<MaskGroup>> {
    let mut groups: BTreeMap<GroupKey, Vec<MaskInstance>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        let key = GroupKey::of(inst, mode).map_err(|e| e.at(format!("instances[{i}]")))?;
        groups.entry(key).or_default().push(inst.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(key, mut members)| {
            // Stable sort keeps input order among full ties.
            members.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then_with(|| a.model_id.cmp(&b.model_id))
            });
            MaskGroup { key, members }
        })
        .collect())
}

/// One fused `(object, component)` mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMask {
    pub object_id: u32,
    pub component: Component,
    pub soft: SoftMask,
    pub instance: MaskInstance,
}

/// Fuse every `(object, component)` unit of a group across `models`.
///
/// A model without a prediction for a unit contributes an empty mask and a
/// zero score. When a model predicts a unit more than once, its
/// highest-ranked prediction is used.
pub fn fuse_group(
    group: &MaskGroup,
    weights: &FusionWeights,
    threshold: f64,
) -> Result<Vec<FusedMask>> {
    let mut units: BTreeMap<(u32, Component), BTreeMap<&str, &MaskInstance>> = BTreeMap::new();
    for inst in &group.members {
        let object_id = inst.object_id.ok_or_else(|| {
            Error::data(
                format!("group[{}] instance(model={})", group.key, inst.model_id),
                "object_id is required to put predictions into correspondence",
            )
        })?;
        if weights.get(&inst.model_id).is_none() {
            return Err(Error::data(
                format!("group[{}]", group.key),
                format!("model {} has no fusion weight", inst.model_id),
            ));
        }
        units
            .entry((object_id, inst.component))
            .or_default()
            .entry(inst.model_id.as_str())
            .or_insert(inst);
    }
    let scale = group.members.first().map_or(1.0, |m| m.scale);
    if group.members.iter().any(|m| m.scale != scale) {
        return Err(Error::data(
            format!("group[{}]", group.key),
            "members come from different scales",
        ));
    }

    let mut fused = Vec::with_capacity(units.len());
    for ((object_id, component), by_model) in units {
        let first = by_model.values().next().expect("unit has a member");
        let (h, w) = first.mask.dims();
        let empty = SoftMask::new(h, w, vec![0.0; h * w])?;
        let mut softs = BTreeMap::new();
        for (&model, inst) in &by_model {
            let m = rle_decode(&inst.mask)?;
            softs.insert(model, SoftMask::from_binary(&m));
        }
        let inputs: Vec<(&str, &SoftMask)> = weights
            .models()
            .map(|m| (m, softs.get(m).unwrap_or(&empty)))
            .collect();
        let soft = fuse_masks(&inputs, weights)?;
        let score = weights
            .weights
            .iter()
            .map(|w| w.weight * by_model.get(w.model.as_str()).map_or(0.0, |i| i.score))
            .sum::<f64>()
            .clamp(0.0, 1.0);
        let binary = binarize(&soft, threshold)?;
        let instance = MaskInstance::from_mask(
            &binary,
            component,
            Some(object_id),
            score,
            ENSEMBLE_MODEL_ID,
            scale,
        );
        fused.push(FusedMask {
            object_id,
            component,
            soft,
            instance,
        });
    }
    Ok(fused)
}
