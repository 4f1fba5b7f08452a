//! JSON manifest describing one image's predictions.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "image_id": "scene-0",
//!   "height": 64, "width": 64, "classes": 5,
//!   "models": ["m0", "m1"],
//!   "scales": [0.5, 1.0],
//!   "logits":       [{"model": "m0", "scale": 0.5, "path": "tensors/..."}],
//!   "alphas":       [{"scale": 0.5, "path": "tensors/..."}],
//!   "crops":        [{"object_id": 0, "bbox": [x0, y0, x1, y1]}],
//!   "local_logits": [{"model": "m0", "scale": 0.5, "object_id": 0, "path": "tensors/..."}],
//!   "instances":    [{"model": "m0", "scale": 1.0, "object_id": 0, "component": "shell",
//!                     "score": 0.9, "bbox": [x0, y0, x1, y1], "counts": [..]}],
//!   "ground_truth": [{"object_id": 0, "component": "shell", "bbox": [..], "counts": [..]}]
//! }
//! ```
//!
//! Tensor paths are relative to the manifest's directory. Masks are
//! row-major run-length counts on the full image grid. Ground-truth records
//! may omit `model`, `scale` and `score`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor_file::{load_attention, load_logits, save_attention, save_logits};
use crate::bundle::PredictionBundle;
use crate::error::{Error, Result};
use crate::mask::{BBox, MaskInstance, RleMask};

pub const SCHEMA_VERSION: u32 = 1;

/// Model id assigned to ground-truth records that do not name one.
pub const GROUND_TRUTH_MODEL: &str = "ground_truth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub schema_version: u32,
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub models: Vec<String>,
    pub scales: Vec<f64>,
    #[serde(default)]
    pub logits: Vec<TensorRef>,
    #[serde(default)]
    pub alphas: Vec<AlphaRef>,
    #[serde(default)]
    pub crops: Vec<CropRecord>,
    #[serde(default)]
    pub local_logits: Vec<LocalRef>,
    #[serde(default)]
    pub instances: Vec<InstanceRecord>,
    #[serde(default)]
    pub ground_truth: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    pub model: String,
    pub scale: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRef {
    pub scale: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropRecord {
    pub object_id: u32,
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalRef {
    pub model: String,
    pub scale: f64,
    pub object_id: u32,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u32>,
    pub component: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub bbox: [u32; 4],
    pub counts: Vec<u32>,
}

impl InstanceRecord {
    pub fn from_instance(inst: &MaskInstance) -> Self {
        let b = inst.bbox;
        Self {
            model: Some(inst.model_id.clone()),
            scale: Some(inst.scale),
            object_id: inst.object_id,
            component: inst.component.name().to_owned(),
            score: Some(inst.score),
            bbox: [b.x0, b.y0, b.x1, b.y1],
            counts: inst.mask.counts().to_vec(),
        }
    }

    /// Build the instance on a `height x width` image; errors name the field.
    pub fn to_instance(&self, height: usize, width: usize) -> Result<MaskInstance> {
        let component = self.component.parse().map_err(|_| {
            Error::data(
                "component",
                format!("unknown component {:?}", self.component),
            )
        })?;
        let [x0, y0, x1, y1] = self.bbox;
        let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| Error::data("bbox", e.to_string()))?;
        let mask = RleMask::new(height, width, self.counts.clone())
            .map_err(|e| Error::data("counts", e.to_string()))?;
        let inst = MaskInstance {
            mask,
            bbox,
            component,
            object_id: self.object_id,
            score: self.score.unwrap_or(1.0),
            model_id: self
                .model
                .clone()
                .unwrap_or_else(|| GROUND_TRUTH_MODEL.to_owned()),
            scale: self.scale.unwrap_or(1.0),
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl ManifestDoc {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: ManifestDoc = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::data(
                "schema_version",
                format!(
                    "found {}, this build reads {SCHEMA_VERSION}",
                    doc.schema_version
                ),
            ));
        }
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_json(path, self)
    }

    /// Resolve tensor references against `base` and validate everything.
    pub fn into_bundle(self, base: &Path) -> Result<PredictionBundle> {
        let mut bundle = PredictionBundle {
            image_id: self.image_id,
            height: self.height,
            width: self.width,
            classes: self.classes,
            models: self.models,
            scales: self.scales,
            ..Default::default()
        };
        let scale_idx = |record: &str, s: f64, b: &PredictionBundle| {
            b.scale_index(s)
                .ok_or_else(|| Error::data(record.to_owned(), format!("scale {s} is not listed")))
        };
        let tensor_err = |record: &str, e: Error| match e {
            Error::Io { path, source } => Error::data(
                record.to_owned(),
                format!("cannot read {}: {source}", path.display()),
            ),
            other => other.at(record.to_owned()),
        };

        for (i, r) in self.logits.iter().enumerate() {
            let record = format!("logits[{i}]");
            let s = scale_idx(&record, r.scale, &bundle)?;
            let map = load_logits(&base.join(&r.path)).map_err(|e| tensor_err(&record, e))?;
            if bundle
                .global_logits
                .insert((r.model.clone(), s), map)
                .is_some()
            {
                return Err(Error::data(record, "duplicate (model, scale)"));
            }
        }
        for (i, r) in self.alphas.iter().enumerate() {
            let record = format!("alphas[{i}]");
            let s = scale_idx(&record, r.scale, &bundle)?;
            let map = load_attention(&base.join(&r.path)).map_err(|e| tensor_err(&record, e))?;
            if bundle.alphas.insert(s, map).is_some() {
                return Err(Error::data(record, "duplicate scale"));
            }
        }
        for (i, r) in self.crops.iter().enumerate() {
            let record = format!("crops[{i}]");
            let [x0, y0, x1, y1] = r.bbox;
            let b = BBox::new(x0, y0, x1, y1)
                .map_err(|e| Error::data(record.clone(), e.to_string()))?;
            if bundle.crops.insert(r.object_id, b).is_some() {
                return Err(Error::data(record, "duplicate object_id"));
            }
        }
        for (i, r) in self.local_logits.iter().enumerate() {
            let record = format!("local_logits[{i}]");
            let s = scale_idx(&record, r.scale, &bundle)?;
            let map = load_logits(&base.join(&r.path)).map_err(|e| tensor_err(&record, e))?;
            if bundle
                .local_logits
                .insert((r.model.clone(), s, r.object_id), map)
                .is_some()
            {
                return Err(Error::data(record, "duplicate (model, scale, object_id)"));
            }
        }
        let (h, w) = (bundle.height, bundle.width);
        if h == 0 || w == 0 {
            return Err(Error::data("height/width", "image dims must be positive"));
        }
        for (what, records, out) in [
            ("instances", &self.instances, &mut bundle.instances),
            ("ground_truth", &self.ground_truth, &mut bundle.ground_truth),
        ] {
            for (i, r) in records.iter().enumerate() {
                out.push(
                    r.to_instance(h, w)
                        .map_err(|e| e.at(format!("{what}[{i}]")))?,
                );
            }
        }
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn load_manifest(path: &Path) -> Result<PredictionBundle> {
    let doc = ManifestDoc::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    doc.into_bundle(base)
}

fn scale_tag(idx: usize) -> String {
    format!("s{idx}")
}

/// Write `bundle` as `dir/file_name` plus tensor files under `dir/tensors/`.
pub fn save_bundle(bundle: &PredictionBundle, dir: &Path, file_name: &str) -> Result<PathBuf> {
    bundle.validate()?;
    let mut doc = ManifestDoc {
        schema_version: SCHEMA_VERSION,
        image_id: bundle.image_id.clone(),
        height: bundle.height,
        width: bundle.width,
        classes: bundle.classes,
        models: bundle.models.clone(),
        scales: bundle.scales.clone(),
        logits: vec![],
        alphas: vec![],
        crops: vec![],
        local_logits: vec![],
        instances: bundle
            .instances
            .iter()
            .map(InstanceRecord::from_instance)
            .collect(),
        ground_truth: bundle
            .ground_truth
            .iter()
            .map(InstanceRecord::from_instance)
            .collect(),
    };
    for ((model, s), map) in &bundle.global_logits {
        let rel = format!("tensors/logits_{model}_{}.sgft", scale_tag(*s));
        save_logits(&dir.join(&rel), map)?;
        doc.logits.push(TensorRef {
            model: model.clone(),
            scale: bundle.scales[*s],
            path: rel,
        });
    }
    for (s, map) in &bundle.alphas {
        let rel = format!("tensors/alpha_{}.sgft", scale_tag(*s));
        save_attention(&dir.join(&rel), map)?;
        doc.alphas.push(AlphaRef {
            scale: bundle.scales[*s],
            path: rel,
        });
    }
    doc.crops = bundle
        .crops
        .iter()
        .map(|(&object_id, b)| CropRecord {
            object_id,
            bbox: [b.x0, b.y0, b.x1, b.y1],
        })
        .collect();
    for ((model, s, obj), map) in &bundle.local_logits {
        let rel = format!("tensors/local_{model}_{}_o{obj}.sgft", scale_tag(*s));
        save_logits(&dir.join(&rel), map)?;
        doc.local_logits.push(LocalRef {
            model: model.clone(),
            scale: bundle.scales[*s],
            object_id: *obj,
            path: rel,
        });
    }
    let path = dir.join(file_name);
    doc.write(&path)?;
    Ok(path)
}
