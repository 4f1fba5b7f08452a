//! Mask average precision at a single IoU threshold.
//!
//! Predictions are ranked by score (descending, ties by position in the
//! input list) and greedily matched to the best-overlapping unmatched ground
//! truth of the same component. AP is the all-point interpolated area under
//! the resulting precision/recall staircase.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{iou, rle_decode, BinaryMask, Component, MaskInstance};

/// How instances are pooled into groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingMode {
    /// One group per component, spanning every object.
    Vertical,
    /// One group per object, spanning every component.
    Horizontal,
}

impl std::str::FromStr for GroupingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertical" => Ok(GroupingMode::Vertical),
            "horizontal" => Ok(GroupingMode::Horizontal),
            _ => Err(Error::InvalidArgument(format!(
                "unknown grouping mode {s:?}"
            ))),
        }
    }
}

/// Key of an AP cell or fusion group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum GroupKey {
    Component(Component),
    Object(u32),
    /// Whole-image pooling, used for weighting full-frame logit maps.
    Image,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Component(c) => write!(f, "component:{c}"),
            GroupKey::Object(id) => write!(f, "object:{id}"),
            GroupKey::Image => f.write_str("image"),
        }
    }
}

impl GroupKey {
    /// Group an instance falls into under `mode`.
    pub fn of(inst: &MaskInstance, mode: GroupingMode) -> Result<GroupKey> {
        match mode {
            GroupingMode::Vertical => Ok(GroupKey::Component(inst.component)),
            GroupingMode::Horizontal => inst.object_id.map(GroupKey::Object).ok_or_else(|| {
                Error::data(
                    format!(
                        "instance(model={}, component={})",
                        inst.model_id, inst.component
                    ),
                    "object_id is required for horizontal grouping",
                )
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEntry {
    /// Position of the prediction in the list handed to [`match_predictions`].
    pub pred_id: usize,
    pub score: f64,
    pub true_positive: bool,
    /// Index of the consumed ground truth, for true positives.
    pub gt_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Sorted by score descending, ties by `pred_id` ascending.
    pub entries: Vec<MatchEntry>,
    pub num_gt: usize,
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold {t} must lie in (0, 1]"
        )));
    }
    Ok(())
}

fn decode_all(instances: &[MaskInstance], what: &str) -> Result<Vec<BinaryMask>> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| rle_decode(&inst.mask).map_err(|e| e.at(format!("{what}[{i}].counts"))))
        .collect()
}

/// Indices of `scores` in ranking order: descending score, ascending index.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn match_predictions(
    preds: &[MaskInstance],
    gts: &[MaskInstance],
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_threshold(iou_threshold)?;
    let pred_masks = decode_all(preds, "predictions")?;
    let gt_masks = decode_all(gts, "ground_truth")?;
    if let (Some(p), Some(g)) = (pred_masks.first(), gt_masks.first()) {
        let dims = g.dims();
        if let Some(m) = pred_masks
            .iter()
            .chain(&gt_masks)
            .find(|m| m.dims() != dims)
        {
            return Err(Error::Shape(format!(
                "match_predictions: mask {:?} vs {:?} (first prediction {:?})",
                m.dims(),
                dims,
                p.dims()
            )));
        }
    }

    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let mut consumed = vec![false; gts.len()];
    let mut entries = Vec::with_capacity(preds.len());
    for pred_id in rank_by_score(&scores) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if consumed[g] || gt.component != preds[pred_id].component {
                continue;
            }
            let overlap = iou(&pred_masks[pred_id], &gt_masks[g])?;
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        let gt_id = match best {
            Some((g, overlap)) if overlap >= iou_threshold => {
                consumed[g] = true;
                Some(g)
            }
            _ => None,
        };
        entries.push(MatchEntry {
            pred_id,
            score: scores[pred_id],
            true_positive: gt_id.is_some(),
            gt_id,
        });
    }
    Ok(MatchResult {
        entries,
        num_gt: gts.len(),
    })
}

/// All-point interpolated AP.
///
/// With no ground truth the result is 1 for an empty prediction list and 0
/// otherwise.
pub fn average_precision(m: &MatchResult) -> f64 {
    if m.num_gt == 0 {
        return if m.entries.is_empty() { 1.0 } else { 0.0 };
    }
    let mut precision = Vec::with_capacity(m.entries.len());
    let mut recall = Vec::with_capacity(m.entries.len());
    let mut tp = 0usize;
    for (n, e) in m.entries.iter().enumerate() {
        tp += usize::from(e.true_positive);
        precision.push(tp as f64 / (n + 1) as f64);
        recall.push(tp as f64 / m.num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap.clamp(0.0, 1.0)
}

/// AP per `(model_id, group)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<ApRecord>", from = "Vec<ApRecord>")]
pub struct ApTable {
    cells: BTreeMap<(String, GroupKey), f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRecord {
    pub model: String,
    pub group: GroupKey,
    pub ap: f64,
}

impl From<ApTable> for Vec<ApRecord> {
    fn from(t: ApTable) -> Self {
        t.cells
            .into_iter()
            .map(|((model, group), ap)| ApRecord { model, group, ap })
            .collect()
    }
}

impl From<Vec<ApRecord>> for ApTable {
    fn from(records: Vec<ApRecord>) -> Self {
        let mut t = ApTable::default();
        for r in records {
            t.insert(r.model, r.group, r.ap);
        }
        t
    }
}

impl ApTable {
    pub fn insert(&mut self, model: impl Into<String>, group: GroupKey, ap: f64) {
        self.cells.insert((model.into(), group), ap);
    }

    pub fn get(&self, model: &str, group: GroupKey) -> Option<f64> {
        self.cells.get(&(model.to_owned(), group)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, GroupKey, f64)> {
        self.cells.iter().map(|((m, g), &ap)| (m.as_str(), *g, ap))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn groups(&self) -> Vec<GroupKey> {
        self.cells
            .keys()
            .map(|(_, g)| *g)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn models(&self) -> Vec<String> {
        self.cells
            .keys()
            .map(|(m, _)| m.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Mean AP over a model's groups, stored under [`GroupKey::Image`].
    pub fn with_image_means(mut self) -> ApTable {
        for model in self.models() {
            let aps: Vec<f64> = self
                .iter()
                .filter(|(m, g, _)| *m == model && *g != GroupKey::Image)
                .map(|(_, _, ap)| ap)
                .collect();
            if !aps.is_empty() {
                let mean = aps.iter().sum::<f64>() / aps.len() as f64;
                self.insert(model, GroupKey::Image, mean);
            }
        }
        self
    }
}

/// AP for every model over every group present in the predictions or the
/// ground truth. A model with no predictions in a group scores 0 there
/// (or 1 if the group has no ground truth either).
pub fn group_ap(
    models: &[String],
    preds: &[MaskInstance],
    gts: &[MaskInstance],
    mode: GroupingMode,
    iou_threshold: f64,
) -> Result<ApTable> {
    check_threshold(iou_threshold)?;
    let pred_keys = preds
        .iter()
        .enumerate()
        .map(|(i, p)| GroupKey::of(p, mode).map_err(|e| e.at(format!("predictions[{i}]"))))
        .collect::<Result<Vec<_>>>()?;
    let gt_keys = gts
        .iter()
        .enumerate()
        .map(|(i, g)| GroupKey::of(g, mode).map_err(|e| e.at(format!("ground_truth[{i}]"))))
        .collect::<Result<Vec<_>>>()?;
    let keys: BTreeSet<GroupKey> = pred_keys.iter().chain(&gt_keys).copied().collect();

    let mut table = ApTable::default();
    for key in keys {
        let group_gts: Vec<MaskInstance> = gts
            .iter()
            .zip(&gt_keys)
            .filter(|(_, k)| **k == key)
            .map(|(g, _)| g.clone())
            .collect();
        for model in models {
            let group_preds: Vec<MaskInstance> = preds
                .iter()
                .zip(&pred_keys)
                .filter(|(p, k)| **k == key && &p.model_id == model)
                .map(|(p, _)| p.clone())
                .collect();
            let matched = match_predictions(&group_preds, &group_gts, iou_threshold)?;
            table.insert(model.clone(), key, average_precision(&matched));
        }
    }
    Ok(table)
}

/// How raw AP values are mapped onto `[0, 1]` before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// AP is already a fraction; pass it through.
    #[default]
    Fraction,
    /// Rescale to the group's range, floored by [`MINMAX_FLOOR`].
    MinMax,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fraction" => Ok(Normalization::Fraction),
            "minmax" => Ok(Normalization::MinMax),
            _ => Err(Error::InvalidArgument(format!(
                "unknown normalization {s:?}"
            ))),
        }
    }
}

/// Added to every min-max output so the weakest model keeps a nonzero weight.
pub const MINMAX_FLOOR: f64 = 1e-6;

/// Convert an AP reported in percent to a fraction.
pub fn ap_from_percent(percent: f64) -> f64 {
    percent / 100.0
}

pub fn normalize_ap(aps: &[f64], mode: Normalization) -> Result<Vec<f64>> {
    if aps.is_empty() {
        return Err(Error::InvalidArgument(
            "normalize_ap of an empty list".into(),
        ));
    }
    if let Some(bad) = aps.iter().find(|ap| !(0.0..=1.0).contains(*ap)) {
        return Err(Error::InvalidArgument(format!("AP {bad} outside [0, 1]")));
    }
    Ok(match mode {
        Normalization::Fraction => aps.to_vec(),
        Normalization::MinMax => {
            let min = aps.iter().copied().fold(f64::INFINITY, f64::min);
            let max = aps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == min {
                vec![1.0; aps.len()]
            } else {
                aps.iter()
                    .map(|ap| (ap - min) / (max - min) + MINMAX_FLOOR)
                    .collect()
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;

    fn inst(m: &BinaryMask, c: Component, obj: u32, score: f64, model: &str) -> MaskInstance {
        MaskInstance::from_mask(m, c, Some(obj), score, model, 1.0)
    }

    fn block(x0: usize, x1: usize) -> BinaryMask {
        BinaryMask::from_fn(4, 10, |y, x| y < 2 && x >= x0 && x < x1).unwrap()
    }

    #[test]
    fn empty_predictions() {
        let gt = vec![inst(&block(0, 4), Component::Shell, 0, 1.0, "gt")];
        let m = match_predictions(&[], &gt, 0.6).unwrap();
        assert!(m.entries.is_empty());
        assert_eq!(average_precision(&m), 0.0);
    }

    #[test]
    fn exact_prediction_is_tp() {
        let gt = vec![inst(&block(0, 4), Component::Shell, 0, 1.0, "gt")];
        let p = vec![inst(&block(0, 4), Component::Shell, 0, 0.8, "a")];
        let m = match_predictions(&p, &gt, 0.6).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert!(m.entries[0].true_positive);
        assert_eq!(average_precision(&m), 1.0);
    }

    #[test]
    fn duplicate_prediction_is_fp() {
        // Second prediction covers 9 of the 10 gt pixels: IoU 0.9.
        let gt = vec![inst(&block(0, 5), Component::Shell, 0, 1.0, "gt")];
        let near =
            BinaryMask::from_fn(4, 10, |y, x| (y < 2 && x < 5) && !(y == 1 && x == 4)).unwrap();
        let p = vec![
            inst(&near, Component::Shell, 0, 0.7, "a"),
            inst(&block(0, 5), Component::Shell, 0, 0.9, "a"),
        ];
        let m = match_predictions(&p, &gt, 0.6).unwrap();
        assert_eq!(m.entries[0].pred_id, 1);
        assert!(m.entries[0].true_positive);
        assert_eq!(m.entries[1].pred_id, 0);
        assert!(!m.entries[1].true_positive);
    }

    #[test]
    fn component_must_agree() {
        let gt = vec![inst(&block(0, 4), Component::Shell, 0, 1.0, "gt")];
        let p = vec![inst(&block(0, 4), Component::Meat, 0, 0.8, "a")];
        let m = match_predictions(&p, &gt, 0.6).unwrap();
        assert!(!m.entries[0].true_positive);
    }

    #[test]
    fn ties_break_by_position() {
        assert_eq!(rank_by_score(&[0.5, 0.9, 0.5, 0.9]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn worked_staircase() {
        let entry = |pred_id, tp| MatchEntry {
            pred_id,
            score: 1.0 - pred_id as f64 * 0.1,
            true_positive: tp,
            gt_id: None,
        };
        let m = MatchResult {
            entries: vec![entry(0, true), entry(1, false), entry(2, true)],
            num_gt: 2,
        };
        let ap = average_precision(&m);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn no_ground_truth_conventions() {
        let none = MatchResult {
            entries: vec![],
            num_gt: 0,
        };
        assert_eq!(average_precision(&none), 1.0);
        let fp = MatchResult {
            entries: vec![MatchEntry {
                pred_id: 0,
                score: 0.5,
                true_positive: false,
                gt_id: None,
            }],
            num_gt: 0,
        };
        assert_eq!(average_precision(&fp), 0.0);
    }

    #[test]
    fn threshold_is_validated() {
        assert!(match_predictions(&[], &[], 0.0).is_err());
        assert!(match_predictions(&[], &[], 1.5).is_err());
        assert!(match_predictions(&[], &[], 1.0).is_ok());
    }

    #[test]
    fn group_ap_missing_component() {
        let shell = block(0, 6);
        let gonad = block(2, 4);
        let gts = vec![
            inst(&shell, Component::Shell, 0, 1.0, "gt"),
            inst(&gonad, Component::Gonad, 0, 1.0, "gt"),
        ];
        let preds = vec![inst(&shell, Component::Shell, 0, 0.9, "a")];
        let models = vec!["a".to_owned()];
        let t = group_ap(&models, &preds, &gts, GroupingMode::Vertical, 0.6).unwrap();
        assert_eq!(t.get("a", GroupKey::Component(Component::Shell)), Some(1.0));
        assert_eq!(t.get("a", GroupKey::Component(Component::Gonad)), Some(0.0));

        let h = group_ap(&models, &preds, &gts, GroupingMode::Horizontal, 0.6).unwrap();
        assert_eq!(h.get("a", GroupKey::Object(0)), Some(0.5));
    }

    #[test]
    fn horizontal_requires_object_ids() {
        let mut p = inst(&block(0, 4), Component::Shell, 0, 0.9, "a");
        p.object_id = None;
        let r = group_ap(&["a".into()], &[p], &[], GroupingMode::Horizontal, 0.6);
        assert!(matches!(r, Err(Error::Data { .. })));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(
            normalize_ap(&[0.5, 0.5, 0.5], Normalization::MinMax).unwrap(),
            vec![1.0; 3]
        );
        let v = [0.2, 0.9, 0.4];
        assert_eq!(
            normalize_ap(&v, Normalization::Fraction).unwrap(),
            v.to_vec()
        );
        let n = normalize_ap(&[0.9119, 0.9176, 0.9179], Normalization::MinMax).unwrap();
        let expected = [MINMAX_FLOOR, 0.95 + MINMAX_FLOOR, 1.0 + MINMAX_FLOOR];
        for (a, b) in n.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(normalize_ap(&[], Normalization::Fraction).is_err());
        assert!(normalize_ap(&[91.19], Normalization::Fraction).is_err());
        assert!((ap_from_percent(91.19) - 0.9119).abs() < 1e-15);
    }

    #[test]
    fn ap_table_serializes_as_records() {
        let mut t = ApTable::default();
        t.insert("m", GroupKey::Component(Component::Shell), 0.5);
        t.insert("m", GroupKey::Object(3), 0.25);
        let json = serde_json::to_string(&t).unwrap();
        let back: ApTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let t = t.with_image_means();
        assert_eq!(t.get("m", GroupKey::Image), Some(0.375));
    }
}
