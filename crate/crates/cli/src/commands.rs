//! The `fuse`, `pipeline` and `evaluate` commands as library functions.
//!
//! Each command is split into a pure computation returning an outcome value
//! and a writer that serializes it, so tests can inspect results without
//! touching the filesystem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use segfuse_core::attention::{
    attention_to_map, fit_local, fuse_global_local, region_attention, LocalLogits,
    NEUTRAL_ATTENTION,
};
use segfuse_core::fusion::{
    compute_weights, fuse_group, fuse_logits, group_predictions, ENSEMBLE_MODEL_ID,
};
use segfuse_core::hierarchy::run_inference_chain;
use segfuse_core::io::manifest::{InstanceRecord, ManifestDoc, SCHEMA_VERSION};
use segfuse_core::io::{encode_overlay, save_attention, save_logits, write_bytes, write_json};
use segfuse_core::mask::{expand_bbox, BBox};
use segfuse_core::metrics::group_ap;
use segfuse_core::tensor::{argmax_channel, bilinear_resize};
use segfuse_core::{
    ApTable, AttentionConfig, AttentionMap, BinaryMask, Component, FusionWeights, GroupKey,
    GroupingMode, LabelGrid, LogitMap, MaskInstance, Normalization, PredictionBundle, ScaleChain,
    ScaleEntry,
};
use serde::Serialize;

use crate::config::{BetaOutside, PipelineConfig, Weighting};

/// Model id given to instances derived from the pipeline's label map.
pub const PIPELINE_MODEL_ID: &str = "pipeline";

/// Run `f` on a dedicated pool of `workers` threads.
fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")?;
    Ok(pool.install(f))
}

fn selected_scales(bundle: &PredictionBundle, cfg: &PipelineConfig) -> anyhow::Result<Vec<usize>> {
    if cfg.scales.is_empty() {
        return Ok((0..bundle.scales.len()).collect());
    }
    cfg.scales
        .iter()
        .map(|&s| {
            bundle.scale_index(s).ok_or_else(|| {
                anyhow!(segfuse_core::Error::Data {
                    record: format!("scales[{s}]"),
                    message: "requested scale is missing from the manifest".into(),
                })
            })
        })
        .collect()
}

/// AP tables of one scale of the calibration split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTables {
    pub scale: f64,
    /// Per-component AP plus each model's mean under the `image` key.
    pub vertical: ApTable,
    pub horizontal: ApTable,
}

/// Where fusion weights come from.
#[derive(Debug, Clone)]
pub enum WeightSource {
    Uniform,
    Ap {
        tables: Vec<CalibrationTables>,
        normalization: Normalization,
    },
}

impl WeightSource {
    /// AP weighting requires a calibration manifest with ground truth; there
    /// is no silent fallback to uniform weights.
    pub fn from_config(
        cfg: &PipelineConfig,
        calibration: Option<&PredictionBundle>,
    ) -> anyhow::Result<WeightSource> {
        match cfg.weighting {
            Weighting::Uniform => Ok(WeightSource::Uniform),
            Weighting::Ap => {
                let calib = calibration.ok_or_else(|| {
                    anyhow!(segfuse_core::Error::Data {
                        record: "calibration".into(),
                        message: "AP weighting needs a calibration manifest (--calibration)".into(),
                    })
                })?;
                if calib.ground_truth.is_empty() {
                    bail!(segfuse_core::Error::Data {
                        record: "calibration.ground_truth".into(),
                        message: "AP weighting needs ground truth in the calibration manifest"
                            .into(),
                    });
                }
                let mut tables = Vec::new();
                for &scale in &calib.scales {
                    let preds = calib.instances_at(scale);
                    if preds.is_empty() {
                        continue;
                    }
                    let vertical = group_ap(
                        &calib.models,
                        &preds,
                        &calib.ground_truth,
                        GroupingMode::Vertical,
                        cfg.iou_threshold,
                    )?
                    .with_image_means();
                    let horizontal = group_ap(
                        &calib.models,
                        &preds,
                        &calib.ground_truth,
                        GroupingMode::Horizontal,
                        cfg.iou_threshold,
                    )?;
                    tables.push(CalibrationTables {
                        scale,
                        vertical,
                        horizontal,
                    });
                }
                Ok(WeightSource::Ap {
                    tables,
                    normalization: cfg.normalization.into(),
                })
            }
        }
    }

    /// Weights for `key` at `scale`. A group absent from the calibration
    /// tables (for example an object id that only exists in the target)
    /// falls back to the model's image-level AP.
    pub fn weights(
        &self,
        scale: f64,
        key: GroupKey,
        models: &[String],
    ) -> anyhow::Result<FusionWeights> {
        match self {
            WeightSource::Uniform => Ok(FusionWeights::uniform(key, models)?),
            WeightSource::Ap {
                tables,
                normalization,
            } => {
                let t = tables.iter().find(|t| t.scale == scale).ok_or_else(|| {
                    anyhow!(segfuse_core::Error::Data {
                        record: format!("calibration[scale={scale}]"),
                        message: "no calibration predictions at this scale".into(),
                    })
                })?;
                let table = match key {
                    GroupKey::Object(_) => &t.horizontal,
                    _ => &t.vertical,
                };
                match compute_weights(table, key, models, *normalization) {
                    Ok(w) => Ok(w),
                    Err(_) if key != GroupKey::Image => {
                        let mut w =
                            compute_weights(&t.vertical, GroupKey::Image, models, *normalization)?;
                        w.group = key;
                        Ok(w)
                    }
                    Err(e) => Err(e.into()),
                }
            }
        }
    }

    pub fn tables(&self) -> &[CalibrationTables] {
        match self {
            WeightSource::Uniform => &[],
            WeightSource::Ap { tables, .. } => tables,
        }
    }
}

/// Settings echoed into reports. Excludes anything that must not change the
/// output bytes (worker count, output path).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSettings {
    pub iou_threshold: f64,
    pub normalization: Normalization,
    pub weighting: Weighting,
    pub attention_factor: f64,
    pub binarize_threshold: f64,
    pub alpha_fallback: f64,
    pub bbox_expansion: f64,
    pub beta_outside: BetaOutside,
    pub beta_override: Option<f64>,
}

impl From<&PipelineConfig> for ReportSettings {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            iou_threshold: c.iou_threshold,
            normalization: c.normalization.into(),
            weighting: c.weighting,
            attention_factor: c.attention_factor,
            binarize_threshold: c.binarize_threshold,
            alpha_fallback: c.alpha_fallback,
            bbox_expansion: c.bbox_expansion,
            beta_outside: c.beta_outside,
            beta_override: c.beta_override,
        }
    }
}

// ---------------------------------------------------------------- fuse

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupWeightsRecord {
    pub scale: f64,
    pub mode: GroupingMode,
    pub weights: Vec<FusionWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightsReport {
    pub image_id: String,
    pub settings: ReportSettings,
    pub calibration: Vec<CalibrationTables>,
    pub groups: Vec<GroupWeightsRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedSet {
    pub mode: GroupingMode,
    /// Fused instances across every selected scale.
    pub instances: Vec<MaskInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    pub sets: Vec<FusedSet>,
    pub report: WeightsReport,
}

/// Group, weight, average and binarize the instance masks of `bundle`.
pub fn fuse(
    bundle: &PredictionBundle,
    calibration: Option<&PredictionBundle>,
    cfg: &PipelineConfig,
) -> anyhow::Result<FuseOutcome> {
    cfg.validate()?;
    let source = WeightSource::from_config(cfg, calibration)?;
    let scales = selected_scales(bundle, cfg)?;
    let tasks: Vec<(GroupingMode, usize)> = cfg
        .grouping
        .modes()
        .into_iter()
        .flat_map(|m| scales.iter().map(move |&s| (m, s)))
        .collect();

    let results = in_pool(cfg.workers, || {
        tasks
            .par_iter()
            .map(
                |&(mode, s)| -> anyhow::Result<(Vec<MaskInstance>, GroupWeightsRecord)> {
                    let scale = bundle.scales[s];
                    let groups = group_predictions(&bundle.instances_at(scale), mode)?;
                    let mut instances = Vec::new();
                    let mut weights = Vec::new();
                    for g in &groups {
                        let w = source.weights(scale, g.key, &bundle.models)?;
                        let fused = fuse_group(g, &w, cfg.binarize_threshold)
                            .with_context(|| format!("fusing group {} at scale {scale}", g.key))?;
                        instances.extend(fused.into_iter().map(|f| f.instance));
                        weights.push(w);
                    }
                    Ok((
                        instances,
                        GroupWeightsRecord {
                            scale,
                            mode,
                            weights,
                        },
                    ))
                },
            )
            .collect::<Vec<_>>()
    })?;

    let mut sets: BTreeMap<GroupingMode, Vec<MaskInstance>> = BTreeMap::new();
    let mut groups = Vec::new();
    for ((mode, _), r) in tasks.iter().zip(results) {
        let (instances, record) = r?;
        sets.entry(*mode).or_default().extend(instances);
        groups.push(record);
    }
    Ok(FuseOutcome {
        sets: cfg
            .grouping
            .modes()
            .into_iter()
            .map(|mode| FusedSet {
                mode,
                instances: sets.remove(&mode).unwrap_or_default(),
            })
            .collect(),
        report: WeightsReport {
            image_id: bundle.image_id.clone(),
            settings: cfg.into(),
            calibration: source.tables().to_vec(),
            groups,
        },
    })
}

fn mode_name(mode: GroupingMode) -> &'static str {
    match mode {
        GroupingMode::Vertical => "vertical",
        GroupingMode::Horizontal => "horizontal",
    }
}

/// Manifest holding only instances (and the source's ground truth).
fn instance_manifest(
    source: &PredictionBundle,
    model: &str,
    instances: &[MaskInstance],
) -> ManifestDoc {
    ManifestDoc {
        schema_version: SCHEMA_VERSION,
        image_id: source.image_id.clone(),
        height: source.height,
        width: source.width,
        classes: source.classes,
        models: vec![model.to_owned()],
        scales: source.scales.clone(),
        logits: vec![],
        alphas: vec![],
        crops: vec![],
        local_logits: vec![],
        instances: instances
            .iter()
            .map(InstanceRecord::from_instance)
            .collect(),
        ground_truth: source
            .ground_truth
            .iter()
            .map(InstanceRecord::from_instance)
            .collect(),
    }
}

/// Write `fused_<mode>.json` manifests and `weights.json`; returns the paths.
pub fn write_fuse(
    outcome: &FuseOutcome,
    source: &PredictionBundle,
    dir: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for set in &outcome.sets {
        let path = dir.join(format!("fused_{}.json", mode_name(set.mode)));
        instance_manifest(source, ENSEMBLE_MODEL_ID, &set.instances).write(&path)?;
        paths.push(path);
    }
    let path = dir.join("weights.json");
    write_json(&path, &outcome.report)?;
    paths.push(path);
    Ok(paths)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleEvaluation {
    pub scale: f64,
    pub vertical: ApTable,
    pub horizontal: ApTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub image_id: String,
    pub iou_threshold: f64,
    pub scales: Vec<ScaleEvaluation>,
}

/// Per-(model, component) and per-(model, object) AP of `preds` against the
/// ground truth of `gts`.
pub fn evaluate(
    preds: &PredictionBundle,
    gts: &PredictionBundle,
    cfg: &PipelineConfig,
) -> anyhow::Result<EvaluationReport> {
    cfg.validate()?;
    if preds.image_id != gts.image_id {
        bail!(segfuse_core::Error::Data {
            record: "image_id".into(),
            message: format!(
                "predictions are for {:?} but ground truth is for {:?}",
                preds.image_id, gts.image_id
            ),
        });
    }
    if (preds.height, preds.width) != (gts.height, gts.width) {
        bail!(segfuse_core::Error::Data {
            record: "height/width".into(),
            message: "prediction and ground-truth images differ in size".into(),
        });
    }
    if gts.ground_truth.is_empty() {
        bail!(segfuse_core::Error::Data {
            record: "ground_truth".into(),
            message: "ground-truth manifest has no ground_truth records".into(),
        });
    }
    let mut scales = Vec::new();
    for s in selected_scales(preds, cfg)? {
        let scale = preds.scales[s];
        let instances = preds.instances_at(scale);
        let table = |mode| {
            group_ap(
                &preds.models,
                &instances,
                &gts.ground_truth,
                mode,
                cfg.iou_threshold,
            )
        };
        scales.push(ScaleEvaluation {
            scale,
            vertical: table(GroupingMode::Vertical)?,
            horizontal: table(GroupingMode::Horizontal)?,
        });
    }
    Ok(EvaluationReport {
        image_id: preds.image_id.clone(),
        iou_threshold: cfg.iou_threshold,
        scales,
    })
}

// ---------------------------------------------------------------- pipeline

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleWeightsReport {
    pub scale: f64,
    pub image: FusionWeights,
    pub objects: Vec<FusionWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineEvaluation {
    pub vertical: ApTable,
    pub horizontal: ApTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub image_id: String,
    pub settings: ReportSettings,
    pub scales: Vec<f64>,
    pub output_height: usize,
    pub output_width: usize,
    pub weights: Vec<ScaleWeightsReport>,
    /// Pixel count per label, background first.
    pub label_histogram: Vec<u64>,
    pub evaluation: Option<PipelineEvaluation>,
}

/// Everything one scale contributes to the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleOutcome {
    pub scale: f64,
    /// Global-local fused logits of this scale.
    pub logits: LogitMap,
    pub beta: AttentionMap,
    pub alpha: AttentionMap,
    pub weights: ScaleWeightsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub scales: Vec<ScaleOutcome>,
    /// Chain output resampled to the image grid.
    pub final_logits: LogitMap,
    pub labels: LabelGrid,
    pub instances: Vec<MaskInstance>,
    pub report: PipelineReport,
}

fn missing(record: String, message: &str) -> anyhow::Error {
    anyhow!(segfuse_core::Error::Data {
        record,
        message: message.into(),
    })
}

fn fuse_scale(
    bundle: &PredictionBundle,
    s: usize,
    source: &WeightSource,
    cfg: &PipelineConfig,
) -> anyhow::Result<ScaleOutcome> {
    let scale = bundle.scales[s];
    let (gh, gw) = bundle.scale_grid(s);

    let mut globals = Vec::with_capacity(bundle.models.len());
    for m in &bundle.models {
        let map = bundle.global_logits.get(&(m.clone(), s)).ok_or_else(|| {
            missing(
                format!("logits[model={m}, scale={scale}]"),
                "missing scale entry",
            )
        })?;
        globals.push((m.as_str(), map));
    }
    let image_weights = source.weights(scale, GroupKey::Image, &bundle.models)?;
    let global = fuse_logits(&globals, &image_weights)?;

    let mut locals = Vec::new();
    let mut object_weights = Vec::new();
    for (&obj, region) in &bundle.crops {
        let present: Vec<&String> = bundle
            .models
            .iter()
            .filter(|m| bundle.local_logits.contains_key(&((*m).clone(), s, obj)))
            .collect();
        if present.is_empty() {
            continue;
        }
        if present.len() != bundle.models.len() {
            let absent = bundle
                .models
                .iter()
                .find(|m| !present.contains(m))
                .expect("one model absent");
            return Err(missing(
                format!("local_logits[model={absent}, scale={scale}, object_id={obj}]"),
                "missing local entry (other models provide one)",
            ));
        }
        let region_s = region.scaled(scale, gh, gw)?;
        let fitted = bundle
            .models
            .iter()
            .map(|m| fit_local(&bundle.local_logits[&(m.clone(), s, obj)], &region_s))
            .collect::<segfuse_core::Result<Vec<_>>>()?;
        let members: Vec<(&str, &LogitMap)> = bundle
            .models
            .iter()
            .map(String::as_str)
            .zip(&fitted)
            .collect();
        let w = source.weights(scale, GroupKey::Object(obj), &bundle.models)?;
        locals.push(LocalLogits {
            logits: fuse_logits(&members, &w)?,
            region: region_s,
        });
        object_weights.push(w);
    }

    let beta = match cfg.beta_override {
        Some(v) => AttentionMap::filled(gh, gw, v as f32)?,
        None => {
            let attn_cfg = AttentionConfig::new(cfg.attention_factor)?;
            let regions = locals
                .iter()
                .map(|l| region_attention(&global, &l.logits, &l.region, &attn_cfg))
                .collect::<segfuse_core::Result<Vec<_>>>()?;
            let fill = match cfg.beta_outside {
                BetaOutside::Neutral => NEUTRAL_ATTENTION,
                BetaOutside::Global => 1.0,
            };
            attention_to_map(&regions, gh, gw, fill)?
        }
    };
    let logits = fuse_global_local(&global, &locals, &beta)?;
    let alpha = match bundle.alphas.get(&s) {
        Some(a) => a.clone(),
        None => AttentionMap::filled(gh, gw, cfg.alpha_fallback as f32)?,
    };
    Ok(ScaleOutcome {
        scale,
        logits,
        beta,
        alpha,
        weights: ScaleWeightsReport {
            scale,
            image: image_weights,
            objects: object_weights,
        },
    })
}

/// Region used to cut per-object instances out of the label map.
fn object_regions(
    bundle: &PredictionBundle,
    expansion: f64,
) -> anyhow::Result<BTreeMap<u32, BBox>> {
    let mut regions = bundle.crops.clone();
    for gt in &bundle.ground_truth {
        let Some(obj) = gt.object_id else { continue };
        if bundle.crops.contains_key(&obj) {
            continue;
        }
        let b = expand_bbox(&gt.bbox, expansion, bundle.height, bundle.width)?;
        regions
            .entry(obj)
            .and_modify(|r| *r = r.union(&b))
            .or_insert(b);
    }
    Ok(regions)
}

/// Per-object nested instances from a label map: component `k` covers the
/// region's pixels labelled `k` or any component nested inside it. Scores
/// are the mean softmax confidence of the winning class over the mask.
pub fn labels_to_instances(
    labels: &LabelGrid,
    logits: &LogitMap,
    regions: &BTreeMap<u32, BBox>,
    scale: f64,
) -> segfuse_core::Result<Vec<MaskInstance>> {
    let confidence: Vec<f64> = logits
        .data()
        .chunks_exact(logits.channels())
        .map(|px| {
            let max = px.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
            let sum: f64 = px.iter().map(|&v| (f64::from(v) - max).exp()).sum();
            1.0 / sum
        })
        .collect();
    let mut out = Vec::new();
    for (&obj, region) in regions {
        for c in Component::ALL {
            let inside = |y: usize, x: usize| {
                (region.y0 as usize..region.y1 as usize).contains(&y)
                    && (region.x0 as usize..region.x1 as usize).contains(&x)
            };
            let mask = BinaryMask::from_fn(labels.height, labels.width, |y, x| {
                inside(y, x) && labels.get(y, x) >= c.label()
            })?;
            let area = mask.area();
            if area == 0 {
                continue;
            }
            let total: f64 = mask
                .bits()
                .iter()
                .zip(&confidence)
                .filter(|(b, _)| **b)
                .map(|(_, p)| p)
                .sum();
            let score = (total / area as f64).clamp(0.0, 1.0);
            out.push(MaskInstance::from_mask(
                &mask,
                c,
                Some(obj),
                score,
                PIPELINE_MODEL_ID,
                scale,
            ));
        }
    }
    Ok(out)
}

/// Full multi-scale run: per-scale ensembles, local attention, global-local
/// fusion, the coarse-to-fine chain, labels, and (with ground truth) AP.
pub fn pipeline(
    bundle: &PredictionBundle,
    calibration: Option<&PredictionBundle>,
    cfg: &PipelineConfig,
) -> anyhow::Result<PipelineOutcome> {
    cfg.validate()?;
    let source = WeightSource::from_config(cfg, calibration)?;
    let scales = selected_scales(bundle, cfg)?;
    let per_scale = in_pool(cfg.workers, || {
        scales
            .par_iter()
            .map(|&s| fuse_scale(bundle, s, &source, cfg))
            .collect::<Vec<_>>()
    })?
    .into_iter()
    .collect::<anyhow::Result<Vec<_>>>()?;

    let chain = ScaleChain::new(
        per_scale
            .iter()
            .map(|o| ScaleEntry::new(o.scale, o.logits.clone(), o.alpha.clone()))
            .collect::<segfuse_core::Result<Vec<_>>>()?,
    )?;
    let fused = run_inference_chain(&chain)?;
    let final_logits = bilinear_resize(&fused, bundle.height, bundle.width)?;
    let labels = argmax_channel(&final_logits);

    let finest = *chain
        .entries()
        .last()
        .map(|e| &e.scale)
        .expect("non-empty chain");
    let regions = object_regions(bundle, cfg.bbox_expansion)?;
    let instances = labels_to_instances(&labels, &final_logits, &regions, finest)?;
    let evaluation = if bundle.ground_truth.is_empty() {
        None
    } else {
        let models = [PIPELINE_MODEL_ID.to_owned()];
        let table = |mode| {
            group_ap(
                &models,
                &instances,
                &bundle.ground_truth,
                mode,
                cfg.iou_threshold,
            )
        };
        Some(PipelineEvaluation {
            vertical: table(GroupingMode::Vertical)?,
            horizontal: table(GroupingMode::Horizontal)?,
        })
    };

    let mut histogram = vec![0u64; final_logits.channels()];
    for &l in &labels.labels {
        histogram[l as usize] += 1;
    }
    let report = PipelineReport {
        image_id: bundle.image_id.clone(),
        settings: cfg.into(),
        scales: per_scale.iter().map(|o| o.scale).collect(),
        output_height: final_logits.height(),
        output_width: final_logits.width(),
        weights: per_scale.iter().map(|o| o.weights.clone()).collect(),
        label_histogram: histogram,
        evaluation,
    };
    Ok(PipelineOutcome {
        scales: per_scale,
        final_logits,
        labels,
        instances,
        report,
    })
}

/// Write logits, gates, overlay, instance manifest and report under `dir`.
pub fn write_pipeline(
    outcome: &PipelineOutcome,
    source: &PredictionBundle,
    dir: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (i, s) in outcome.scales.iter().enumerate() {
        let logits = dir.join(format!("scale{i}_fused.sgft"));
        save_logits(&logits, &s.logits)?;
        let beta = dir.join(format!("scale{i}_beta.sgft"));
        save_attention(&beta, &s.beta)?;
        paths.extend([logits, beta]);
    }
    let final_path = dir.join("final_logits.sgft");
    save_logits(&final_path, &outcome.final_logits)?;
    paths.push(final_path);

    let overlay = dir.join("overlay.ppm");
    let bytes = encode_overlay(&outcome.labels)
        .context("label map has classes beyond the overlay palette (background + 4 components)")?;
    write_bytes(&overlay, &bytes)?;
    paths.push(overlay);

    let manifest = dir.join("instances.json");
    instance_manifest(source, PIPELINE_MODEL_ID, &outcome.instances).write(&manifest)?;
    paths.push(manifest);

    let report = dir.join("report.json");
    write_json(&report, &outcome.report)?;
    paths.push(report);
    Ok(paths)
}
