//! Difference-based local attention and the global-local logit blend.
//!
//! Global and local features of a region are compared entrywise, the
//! negated, scaled absolute differences are softmaxed along each row, and
//! rows are renormalized. The resulting matrix is laid out spatially (row
//! `i`, column `j` is region pixel `(i, j)` on the feature grid), resized
//! to the region's pixel extent, and placed into a full-frame gate map that
//! weights global logits against the pasted local logits:
//!
//! `out = global * beta + (sum of pasted locals) * (1 - beta)`
//!
//! In the pipeline the global features are the ensembled full-frame logits
//! cropped to the region and the local features are the ensembled crop
//! logits resampled onto the same grid; see [`region_difference`].

use crate::error::{Error, Result};
use crate::mask::{paste, BBox, Crop};
use crate::tensor::{bilinear_resize, gated_blend, softmax_rows, AttentionMap, LogitMap, Matrix};

/// Gate value outside every attended region: global and local logits are
/// blended evenly.
pub const NEUTRAL_ATTENTION: f32 = 0.5;

/// Entrywise `|global - local|`; every entry is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix(Matrix);

impl DifferenceMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Invariant(
                "difference matrix has a negative entry".into(),
            ));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    factor: f64,
}

impl AttentionConfig {
    pub fn new(factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "attention factor {factor} must be positive"
            )));
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { factor: 1.0 }
    }
}

pub fn difference_matrix(global_feat: &Matrix, local_feat: &Matrix) -> Result<DifferenceMatrix> {
    if global_feat.dims() != local_feat.dims() {
        return Err(Error::Shape(format!(
            "difference_matrix: {:?} vs {:?}",
            global_feat.dims(),
            local_feat.dims()
        )));
    }
    let data = global_feat
        .data()
        .iter()
        .zip(local_feat.data())
        .map(|(g, l)| (g - l).abs())
        .collect();
    Ok(DifferenceMatrix(Matrix::from_parts(
        global_feat.rows(),
        global_feat.cols(),
        data,
    )))
}

/// Row-wise softmax of `-factor * D`.
pub fn local_attention(d: &DifferenceMatrix, cfg: &AttentionConfig) -> Result<Matrix> {
    let f = cfg.factor;
    softmax_rows(&d.0.map(|v| -f * v))
}

/// Divide each row by its sum.
pub fn row_normalize(a: &Matrix) -> Result<Matrix> {
    if a.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "row_normalize needs nonnegative entries".into(),
        ));
    }
    let mut data = Vec::with_capacity(a.data().len());
    for r in 0..a.rows() {
        let row = a.row(r);
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateAttention { row: r });
        }
        data.extend(row.iter().map(|v| v / sum));
    }
    Ok(Matrix::from_parts(a.rows(), a.cols(), data))
}

/// One attended region: its spatial attention grid and where it lands.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAttention {
    pub attention: Matrix,
    pub region: BBox,
}

/// Full-frame gate map from region attention grids.
///
/// Each grid is resized to its region and written over `fill` in the
/// given order, so later regions win where boxes overlap.
pub fn attention_to_map(
    regions: &[RegionAttention],
    height: usize,
    width: usize,
    fill: f32,
) -> Result<AttentionMap> {
    let mut canvas = AttentionMap::filled(height, width, fill)?;
    for (i, r) in regions.iter().enumerate() {
        if !r.region.fits(height, width) {
            return Err(Error::Shape(format!(
                "attention region {i} {} outside {height}x{width} canvas",
                r.region
            )));
        }
        let (rows, cols) = r.attention.dims();
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("attention region {i} is empty")));
        }
        let values = r
            .attention
            .data()
            .iter()
            .map(|&v| v as f32)
            .collect::<Vec<_>>();
        let grid = AttentionMap::new(rows, cols, values)?;
        let grid = grid.resize(r.region.height(), r.region.width())?;
        let mut data = canvas.data().to_vec();
        for y in 0..r.region.height() {
            let dst = (r.region.y0 as usize + y) * width + r.region.x0 as usize;
            data[dst..dst + r.region.width()]
                .copy_from_slice(&grid.data()[y * r.region.width()..(y + 1) * r.region.width()]);
        }
        canvas = AttentionMap::from_parts(height, width, data);
    }
    Ok(canvas)
}

/// Local logits already resampled to their region, with the region box.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLogits {
    pub logits: LogitMap,
    pub region: BBox,
}

/// Sum of every local map pasted onto a zero canvas of the global frame.
pub fn pasted_local_sum(
    height: usize,
    width: usize,
    channels: usize,
    locals: &[LocalLogits],
) -> Result<LogitMap> {
    let zeros = LogitMap::zeros(height, width, channels)?;
    let mut acc = vec![0.0f64; height * width * channels];
    for (i, local) in locals.iter().enumerate() {
        let placed = paste(&zeros, &local.logits, &local.region)
            .map_err(|e| Error::Shape(format!("local {i}: {e}")))?;
        for (a, &v) in acc.iter_mut().zip(placed.data()) {
            *a += f64::from(v);
        }
    }
    LogitMap::new(
        height,
        width,
        channels,
        acc.into_iter().map(|v| v as f32).collect(),
    )
}

/// `global * beta + (sum_p paste(local_p)) * (1 - beta)`.
pub fn fuse_global_local(
    global: &LogitMap,
    locals: &[LocalLogits],
    beta: &AttentionMap,
) -> Result<LogitMap> {
    let (h, w, c) = global.dims();
    if beta.dims() != (h, w) {
        return Err(Error::Shape(format!(
            "fuse_global_local: global {h}x{w} vs beta {:?}",
            beta.dims()
        )));
    }
    let local_sum = pasted_local_sum(h, w, c, locals)?;
    gated_blend(global, &local_sum, beta)
}

/// Channel-averaged difference between the global logits cropped to
/// `region` and local logits on the same grid.
pub fn region_difference(
    global: &LogitMap,
    local: &LogitMap,
    region: &BBox,
) -> Result<DifferenceMatrix> {
    let crop = global.crop(region)?;
    if crop.dims() != local.dims() {
        return Err(Error::Shape(format!(
            "region_difference: global crop {:?} vs local {:?}",
            crop.dims(),
            local.dims()
        )));
    }
    let (h, w, c) = crop.dims();
    let mut acc = vec![0.0f64; h * w];
    for ch in 0..c {
        let d = difference_matrix(&crop.channel_matrix(ch), &local.channel_matrix(ch))?;
        for (a, v) in acc.iter_mut().zip(d.0.data()) {
            *a += v;
        }
    }
    let n = c as f64;
    DifferenceMatrix::new(Matrix::from_parts(
        h,
        w,
        acc.into_iter().map(|v| v / n).collect(),
    ))
}

/// Resample local logits onto `region`'s extent.
pub fn fit_local(local: &LogitMap, region: &BBox) -> Result<LogitMap> {
    bilinear_resize(local, region.height(), region.width())
}

/// Difference, softmax, and row normalization for one region.
pub fn region_attention(
    global: &LogitMap,
    local: &LogitMap,
    region: &BBox,
    cfg: &AttentionConfig,
) -> Result<RegionAttention> {
    let d = region_difference(global, local, region)?;
    let attention = row_normalize(&local_attention(&d, cfg)?)?;
    Ok(RegionAttention {
        attention,
        region: *region,
    })
}
