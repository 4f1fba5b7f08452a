//! Seeded synthetic scenes for exercising the pipeline without real data.
//!
//! Each object is four concentric ellipses, shell ⊇ meat ⊇ gonad ⊇ muscle.
//! Every simulated model sees every object shifted and rescaled by a seeded
//! amount proportional to its perturbation magnitude; magnitude 0 reproduces
//! the ground truth exactly. Predictions at a scale below 1 are rasterized
//! on the coarser grid and upsampled (nearest) back to the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segfuse_core::bundle::scale_grid;
use segfuse_core::mask::expand_bbox;
use segfuse_core::{BinaryMask, Component, LogitMap, MaskInstance, PredictionBundle};
use serde::{Deserialize, Serialize};

/// Logit given to the winning class of a synthetic pixel.
pub const LOGIT_PEAK: f32 = 4.0;

const CLASSES: usize = 5;

/// Radii of meat, gonad and muscle relative to the shell.
const NESTING: [f64; 4] = [1.0, 0.72, 0.48, 0.26];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub objects: usize,
    /// Perturbation magnitude in pixels, one entry per model.
    pub perturbations: Vec<f64>,
    pub scales: Vec<f64>,
    pub bbox_expansion: f64,
    /// Upsampling of crop logits relative to the crop region at each scale.
    pub local_upsample: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            height: 96,
            width: 96,
            objects: 4,
            perturbations: vec![0.0, 2.0, 4.0],
            scales: vec![0.5, 1.0],
            bbox_expansion: 1.2,
            local_upsample: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }

    fn nested(&self, component: Component) -> Ellipse {
        let k = NESTING[component as usize - 1];
        Ellipse {
            rx: self.rx * k,
            ry: self.ry * k,
            ..*self
        }
    }
}

/// Shell outlines of one scene, indexed by object id.
type Scene = Vec<Ellipse>;

fn model_id(i: usize) -> String {
    format!("m{i}")
}

/// Innermost component covering image point `(x, y)`, or 0 for background.
fn label_at(scene: &Scene, x: f64, y: f64) -> u32 {
    for shell in scene {
        if shell.contains(x, y) {
            return Component::ALL
                .iter()
                .rev()
                .find(|c| shell.nested(**c).contains(x, y))
                .map_or(0, |c| c.label());
        }
    }
    0
}

fn render_logits(
    scene: &Scene,
    grid_h: usize,
    grid_w: usize,
    x0: f64,
    y0: f64,
    span_h: f64,
    span_w: f64,
) -> LogitMap {
    let mut data = vec![0.0f32; grid_h * grid_w * CLASSES];
    for gy in 0..grid_h {
        let y = y0 + (gy as f64 + 0.5) * span_h / grid_h as f64;
        for gx in 0..grid_w {
            let x = x0 + (gx as f64 + 0.5) * span_w / grid_w as f64;
            let label = label_at(scene, x, y) as usize;
            data[(gy * grid_w + gx) * CLASSES + label] = LOGIT_PEAK;
        }
    }
    LogitMap::new(grid_h, grid_w, CLASSES, data).expect("finite synthetic logits")
}

/// Mask of one ellipse rasterized on a grid at `scale`, upsampled to the image.
fn raster(e: &Ellipse, height: usize, width: usize, scale: f64) -> BinaryMask {
    let (gh, gw) = scale_grid(height, width, scale);
    let coarse = BinaryMask::from_fn(gh, gw, |gy, gx| {
        let y = (gy as f64 + 0.5) * height as f64 / gh as f64;
        let x = (gx as f64 + 0.5) * width as f64 / gw as f64;
        e.contains(x, y)
    })
    .expect("positive grid");
    if (gh, gw) == (height, width) {
        return coarse;
    }
    BinaryMask::from_fn(height, width, |y, x| {
        coarse.get((y * gh) / height, (x * gw) / width)
    })
    .expect("positive image")
}

fn layout(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Scene {
    let cols = (cfg.objects as f64).sqrt().ceil().max(1.0) as usize;
    let rows = cfg.objects.div_ceil(cols).max(1);
    let cell_w = cfg.width as f64 / cols as f64;
    let cell_h = cfg.height as f64 / rows as f64;
    (0..cfg.objects)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Ellipse {
                cx: (c as f64 + 0.5) * cell_w + rng.gen_range(-0.05..=0.05) * cell_w,
                cy: (r as f64 + 0.5) * cell_h + rng.gen_range(-0.05..=0.05) * cell_h,
                rx: cell_w * rng.gen_range(0.28..=0.36),
                ry: cell_h * rng.gen_range(0.28..=0.36),
            }
        })
        .collect()
}

fn perturb(scene: &Scene, magnitude: f64, rng: &mut ChaCha8Rng) -> Scene {
    scene
        .iter()
        .map(|e| {
            // Draw unconditionally so the stream does not depend on magnitude.
            let (ux, uy, us): (f64, f64, f64) = (
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
            );
            let grow = 1.0 + 0.5 * us * magnitude / e.rx.min(e.ry);
            Ellipse {
                cx: e.cx + ux * magnitude,
                cy: e.cy + uy * magnitude,
                rx: (e.rx * grow).max(1.0),
                ry: (e.ry * grow).max(1.0),
            }
        })
        .collect()
}

fn instances_for(
    scene: &Scene,
    model: &str,
    scale: f64,
    cfg: &SynthConfig,
    scores: &[f64],
) -> Vec<MaskInstance> {
    let mut out = Vec::new();
    for (obj, shell) in scene.iter().enumerate() {
        for c in Component::ALL {
            let mask = raster(&shell.nested(c), cfg.height, cfg.width, scale);
            if mask.area() == 0 {
                continue;
            }
            out.push(MaskInstance::from_mask(
                &mask,
                c,
                Some(obj as u32),
                scores[obj * 4 + c as usize - 1],
                model,
                scale,
            ));
        }
    }
    out
}

/// Build a complete synthetic bundle, ground truth included.
pub fn generate(cfg: &SynthConfig) -> segfuse_core::Result<PredictionBundle> {
    if cfg.perturbations.is_empty() || cfg.objects == 0 || cfg.scales.is_empty() {
        return Err(segfuse_core::Error::InvalidArgument(
            "synth needs at least one model, object, and scale".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = layout(cfg, &mut rng);
    let scenes: Vec<Scene> = cfg
        .perturbations
        .iter()
        .map(|&p| perturb(&truth, p, &mut rng))
        .collect();
    let scores: Vec<Vec<f64>> = scenes
        .iter()
        .map(|_| {
            (0..cfg.objects * 4)
                .map(|_| rng.gen_range(0.5..=1.0))
                .collect()
        })
        .collect();

    let mut bundle = PredictionBundle {
        image_id: format!("synth-{}", cfg.seed),
        height: cfg.height,
        width: cfg.width,
        classes: CLASSES,
        models: (0..scenes.len()).map(model_id).collect(),
        scales: cfg.scales.clone(),
        ..Default::default()
    };
    bundle.models.sort();

    for (obj, shell) in truth.iter().enumerate() {
        for c in Component::ALL {
            let mask = raster(&shell.nested(c), cfg.height, cfg.width, 1.0);
            if mask.area() > 0 {
                bundle.ground_truth.push(MaskInstance::from_mask(
                    &mask,
                    c,
                    Some(obj as u32),
                    1.0,
                    segfuse_core::io::manifest::GROUND_TRUTH_MODEL,
                    1.0,
                ));
            }
        }
    }

    // Crop regions: union of the models' detected shell boxes, expanded.
    for obj in 0..cfg.objects {
        let detected = scenes
            .iter()
            .filter_map(|s| raster(&s[obj], cfg.height, cfg.width, 1.0).bbox())
            .reduce(|a, b| a.union(&b));
        if let Some(b) = detected {
            let region = expand_bbox(&b, cfg.bbox_expansion, cfg.height, cfg.width)?;
            bundle.crops.insert(obj as u32, region);
        }
    }

    for (m, scene) in scenes.iter().enumerate() {
        let id = model_id(m);
        for (s, &scale) in cfg.scales.iter().enumerate() {
            let (gh, gw) = scale_grid(cfg.height, cfg.width, scale);
            bundle.global_logits.insert(
                (id.clone(), s),
                render_logits(scene, gh, gw, 0.0, 0.0, cfg.height as f64, cfg.width as f64),
            );
            for (&obj, region) in &bundle.crops {
                let region_s = region.scaled(scale, gh, gw)?;
                let up = cfg.local_upsample.max(1);
                let local = render_logits(
                    scene,
                    region_s.height() * up,
                    region_s.width() * up,
                    f64::from(region.x0),
                    f64::from(region.y0),
                    region.height() as f64,
                    region.width() as f64,
                );
                bundle.local_logits.insert((id.clone(), s, obj), local);
            }
            bundle
                .instances
                .extend(instances_for(scene, &id, scale, cfg, &scores[m]));
        }
    }
    bundle.validate()?;
    Ok(bundle)
}
