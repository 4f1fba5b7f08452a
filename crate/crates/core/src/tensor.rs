//! Dense grids and the pixel-wise kernels the fusion stages are built from.
//!
//! Storage is `f32` (the on-disk precision); every kernel evaluates in `f64`
//! and rounds once when storing. Because each stored operand is an `f32`,
//! a convex combination computed this way always rounds back into the
//! closed range spanned by its operands.
//!
//! Resampling uses the half-pixel-center convention: output pixel `d`
//! samples source coordinate `(d + 0.5) * in / out - 0.5`, clamped to
//! `[0, in - 1]`, with bilinear weights taken from the fractional part.

use crate::error::{Error, Result};

/// Dense `height x width x channels` grid of class scores, row-major and
/// channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl LogitMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "logit map dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "logit map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "logit map element {i} is not finite"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Map with every element set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Constructor for kernels whose output is finite whenever the inputs are.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All channel values at one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// One channel as a `height x width` matrix.
    pub fn channel_matrix(&self, c: usize) -> Matrix {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| f64::from(v))
            .collect();
        Matrix::from_parts(self.height, self.width, data)
    }

    fn same_dims(&self, other: &LogitMap, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

/// Dense `height x width` grid of gate values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl AttentionMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "attention map dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "attention map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invariant(format!(
                "attention element {i} = {} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
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

    /// Resample with the same bilinear convention as [`bilinear_resize`].
    pub fn resize(&self, out_h: usize, out_w: usize) -> Result<AttentionMap> {
        check_target(out_h, out_w)?;
        if (out_h, out_w) == self.dims() {
            return Ok(self.clone());
        }
        let mut data = resample(&self.data, self.height, self.width, 1, out_h, out_w);
        // Interpolating values in [0, 1] stays in [0, 1] up to rounding.
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(AttentionMap::from_parts(out_h, out_w, data))
    }
}

/// Row-major matrix of `f64`, used for feature differences and attention rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "matrix element {i} is not finite"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_parts(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Per-pixel class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

impl LabelGrid {
    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

pub fn pixelwise_mul(a: &LogitMap, w: &AttentionMap) -> Result<LogitMap> {
    if (a.height, a.width) != w.dims() {
        return Err(Error::Shape(format!(
            "pixelwise_mul: logits {}x{} vs attention {}x{}",
            a.height, a.width, w.height, w.width
        )));
    }
    let data = a
        .data
        .chunks_exact(a.channels)
        .zip(&w.data)
        .flat_map(|(px, &g)| {
            px.iter()
                .map(move |&v| (f64::from(v) * f64::from(g)) as f32)
        })
        .collect();
    Ok(LogitMap::from_parts(a.height, a.width, a.channels, data))
}

pub fn pixelwise_add(a: &LogitMap, b: &LogitMap) -> Result<LogitMap> {
    a.same_dims(b, "pixelwise_add")?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (f64::from(x) + f64::from(y)) as f32)
        .collect::<Vec<_>>();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant("pixelwise_add overflowed f32".into()));
    }
    Ok(LogitMap::from_parts(a.height, a.width, a.channels, data))
}

pub fn complement(w: &AttentionMap) -> AttentionMap {
    let data = w.data.iter().map(|&v| 1.0 - v).collect();
    AttentionMap::from_parts(w.height, w.width, data)
}

/// `a * gate + b * (1 - gate)` per pixel and channel, rounded once.
///
/// This is the gating form shared by global-local fusion and adjacent-scale
/// fusion.
pub fn gated_blend(a: &LogitMap, b: &LogitMap, gate: &AttentionMap) -> Result<LogitMap> {
    a.same_dims(b, "gated_blend")?;
    if (a.height, a.width) != gate.dims() {
        return Err(Error::Shape(format!(
            "gated_blend: logits {}x{} vs gate {}x{}",
            a.height, a.width, gate.height, gate.width
        )));
    }
    let c = a.channels;
    let mut data = Vec::with_capacity(a.data.len());
    for (i, &g) in gate.data.iter().enumerate() {
        let range = i * c..(i + 1) * c;
        // Saturated gates select an operand outright, keeping signed zeros intact.
        if g == 1.0 {
            data.extend_from_slice(&a.data[range]);
        } else if g == 0.0 {
            data.extend_from_slice(&b.data[range]);
        } else {
            let g = f64::from(g);
            let keep = 1.0 - g;
            for k in range {
                data.push((f64::from(a.data[k]) * g + f64::from(b.data[k]) * keep) as f32);
            }
        }
    }
    Ok(LogitMap::from_parts(a.height, a.width, c, data))
}

fn check_target(out_h: usize, out_w: usize) -> Result<()> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    Ok(())
}

/// Source sample position for one output index: `(lo, hi, frac)`.
#[inline]
pub(crate) fn source_coord(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

fn resample(
    data: &[f32],
    in_h: usize,
    in_w: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, in_w, out_w)).collect();
    let at = |y: usize, x: usize, c: usize| f64::from(data[(y * in_w + x) * channels + c]);
    let mut out = Vec::with_capacity(out_h * out_w * channels);
    for y in 0..out_h {
        let (y0, y1, ty) = source_coord(y, in_h, out_h);
        for &(x0, x1, tx) in &cols {
            for c in 0..channels {
                let (v00, v01) = (at(y0, x0, c), at(y0, x1, c));
                let (v10, v11) = (at(y1, x0, c), at(y1, x1, c));
                let top = v00 + (v01 - v00) * tx;
                let bottom = v10 + (v11 - v10) * tx;
                out.push((top + (bottom - top) * ty) as f32);
            }
        }
    }
    out
}

/// Per-channel bilinear resize (half-pixel centers, clamp-to-edge).
///
/// Same-size resizes return a bit-identical copy, and the lerp form keeps a
/// constant map exactly constant.
pub fn bilinear_resize(a: &LogitMap, out_h: usize, out_w: usize) -> Result<LogitMap> {
    check_target(out_h, out_w)?;
    if (out_h, out_w) == (a.height, a.width) {
        return Ok(a.clone());
    }
    let data = resample(&a.data, a.height, a.width, a.channels, out_h, out_w);
    Ok(LogitMap::from_parts(out_h, out_w, a.channels, data))
}

/// Row-wise softmax with max subtraction. Rows are reduced left to right.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if m.cols == 0 {
        return Err(Error::InvalidArgument("softmax of an empty row".into()));
    }
    let mut out = Vec::with_capacity(m.data.len());
    for r in 0..m.rows {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &v in row {
            let e = (v - max).exp();
            sum += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= sum;
        }
    }
    Ok(Matrix::from_parts(m.rows, m.cols, out))
}

/// Index of the largest channel at each pixel; ties go to the lowest index.
pub fn argmax_channel(a: &LogitMap) -> LabelGrid {
    let labels = a
        .data
        .chunks_exact(a.channels)
        .map(|px| {
            let mut best = 0;
            for (c, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect();
    LabelGrid {
        height: a.height,
        width: a.width,
        labels,
    }
}
