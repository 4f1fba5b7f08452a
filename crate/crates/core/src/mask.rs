//! Binary instance masks, their run-length codec, IoU, and box geometry.
//!
//! Run-length counts are row-major. The first run always counts zeros (it
//! may be empty) and runs then alternate between ones and zeros. Only that
//! leading run may have length zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::LogitMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dims must be positive, got {height}x{width}"
            )));
        }
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "mask {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    /// Mask of pixels where `f(y, x)` holds.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        Self::new(height, width, bits)
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box of the set pixels, `None` when the mask is empty.
    pub fn bbox(&self) -> Option<BBox> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0;
        let mut y1 = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != usize::MAX).then(|| BBox::from_parts(x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }

    /// `true` when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

impl RleMask {
    pub fn new(height: usize, width: usize, counts: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dims must be positive, got {height}x{width}"
            )));
        }
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total != (height * width) as u64 {
            return Err(Error::Format(format!(
                "RLE counts sum to {total}, expected {}x{} = {}",
                height,
                width,
                height * width
            )));
        }
        if let Some(i) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::Format(format!(
                "RLE run {} has zero length; only the leading run may be empty",
                i + 1
            )));
        }
        Ok(Self {
            height,
            width,
            counts,
        })
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

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of set pixels (sum of the odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| u64::from(c))
            .sum()
    }
}

pub fn rle_encode(m: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &bit in &m.bits {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    counts.push(run);
    RleMask {
        height: m.height,
        width: m.width,
        counts,
    }
}

pub fn rle_decode(r: &RleMask) -> Result<BinaryMask> {
    let n = r.height * r.width;
    let mut bits = Vec::with_capacity(n);
    let mut value = false;
    for &c in &r.counts {
        if bits.len() + c as usize > n {
            return Err(Error::Format(format!(
                "RLE counts overrun a {}x{} mask",
                r.height, r.width
            )));
        }
        bits.resize(bits.len() + c as usize, value);
        value = !value;
    }
    if bits.len() != n {
        return Err(Error::Format(format!(
            "RLE counts cover {} of {} pixels",
            bits.len(),
            n
        )));
    }
    BinaryMask::new(r.height, r.width, bits)
}

/// Intersection over union. Two empty masks score 0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "iou: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &q) in a.bits.iter().zip(&b.bits) {
        inter += u64::from(p && q);
        union += u64::from(p || q);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Half-open pixel box `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidArgument(format!(
                "degenerate box ({x0},{y0},{x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub(crate) fn from_parts(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        debug_assert!(x0 < x1 && y0 < y1);
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        (self.x1 - self.x0) as usize
    }

    pub fn height(&self) -> usize {
        (self.y1 - self.y0) as usize
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::from_parts(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    /// Whether the box lies inside a `height x width` image.
    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.x1 as usize <= width && self.y1 as usize <= height
    }

    fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        if !self.fits(height, width) {
            return Err(Error::Shape(format!(
                "box {self} exceeds {height}x{width} grid"
            )));
        }
        Ok(())
    }

    /// Map an image-space box onto a grid rendered at `scale`, rounding
    /// outward and clamping to the `grid_h x grid_w` extent.
    pub fn scaled(&self, scale: f64, grid_h: usize, grid_w: usize) -> Result<BBox> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must be positive"
            )));
        }
        let lo = |v: u32, limit: usize| {
            (snap_floor(f64::from(v) * scale).max(0.0) as usize).min(limit - 1)
        };
        let hi = |v: u32, limit: usize| (snap_ceil(f64::from(v) * scale) as usize).min(limit);
        let (x0, y0) = (lo(self.x0, grid_w), lo(self.y0, grid_h));
        let (x1, y1) = (
            hi(self.x1, grid_w).max(x0 + 1),
            hi(self.y1, grid_h).max(y0 + 1),
        );
        BBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.x0, self.y0, self.x1, self.y1)
    }
}

impl Serialize for BBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x0, self.y0, self.x1, self.y1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x0, y0, x1, y1] = <[u32; 4]>::deserialize(d)?;
        BBox::new(x0, y0, x1, y1).map_err(serde::de::Error::custom)
    }
}

// Products like 10 * 1.2 land a hair off the integer they denote; treat
// anything within this distance of an integer as that integer.
const SNAP: f64 = 1e-9;

fn snap_floor(v: f64) -> f64 {
    (v + SNAP).floor()
}

fn snap_ceil(v: f64) -> f64 {
    (v - SNAP).ceil()
}

/// Grow `b` by `factor` about its center, round outward, and clamp to the
/// image. The result always encloses `b`.
pub fn expand_bbox(b: &BBox, factor: f64, image_h: usize, image_w: usize) -> Result<BBox> {
    if b.x0 >= b.x1 || b.y0 >= b.y1 {
        return Err(Error::InvalidArgument(format!("degenerate box {b}")));
    }
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "expansion factor {factor} must be >= 1"
        )));
    }
    b.check_fits(image_h, image_w)?;
    let grow = |lo: u32, hi: u32, limit: usize| {
        let center = (f64::from(lo) + f64::from(hi)) / 2.0;
        let half = f64::from(hi - lo) * factor / 2.0;
        let new_lo = snap_floor(center - half).max(0.0) as u32;
        let new_hi = (snap_ceil(center + half) as usize).min(limit) as u32;
        (new_lo.min(lo), new_hi.max(hi))
    };
    let (x0, x1) = grow(b.x0, b.x1, image_w);
    let (y0, y1) = grow(b.y0, b.y1, image_h);
    Ok(BBox::from_parts(x0, y0, x1, y1))
}

/// Grids that can be cut to a box.
pub trait Crop: Sized {
    fn crop(&self, b: &BBox) -> Result<Self>;
}

impl Crop for LogitMap {
    fn crop(&self, b: &BBox) -> Result<Self> {
        b.check_fits(self.height(), self.width())?;
        let c = self.channels();
        let mut data = Vec::with_capacity(b.height() * b.width() * c);
        for y in b.y0 as usize..b.y1 as usize {
            let start = (y * self.width() + b.x0 as usize) * c;
            data.extend_from_slice(&self.data()[start..start + b.width() * c]);
        }
        Ok(LogitMap::from_parts(b.height(), b.width(), c, data))
    }
}

impl Crop for BinaryMask {
    fn crop(&self, b: &BBox) -> Result<Self> {
        b.check_fits(self.height, self.width)?;
        let mut bits = Vec::with_capacity(b.height() * b.width());
        for y in b.y0 as usize..b.y1 as usize {
            let start = y * self.width + b.x0 as usize;
            bits.extend_from_slice(&self.bits[start..start + b.width()]);
        }
        BinaryMask::new(b.height(), b.width(), bits)
    }
}

pub fn crop<T: Crop>(grid: &T, b: &BBox) -> Result<T> {
    grid.crop(b)
}

/// Copy of `canvas` with the box region overwritten by `patch`.
pub fn paste(canvas: &LogitMap, patch: &LogitMap, b: &BBox) -> Result<LogitMap> {
    b.check_fits(canvas.height(), canvas.width())?;
    if patch.dims() != (b.height(), b.width(), canvas.channels()) {
        return Err(Error::Shape(format!(
            "paste: patch {:?} does not fit box {b} with {} channels",
            patch.dims(),
            canvas.channels()
        )));
    }
    let c = canvas.channels();
    let mut data = canvas.data().to_vec();
    let row_len = b.width() * c;
    for (row, y) in (b.y0 as usize..b.y1 as usize).enumerate() {
        let dst = (y * canvas.width() + b.x0 as usize) * c;
        data[dst..dst + row_len].copy_from_slice(&patch.data()[row * row_len..(row + 1) * row_len]);
    }
    Ok(LogitMap::from_parts(
        canvas.height(),
        canvas.width(),
        c,
        data,
    ))
}

/// Oyster anatomy labels. The discriminant doubles as the class channel and
/// overlay label (0 is background).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Shell = 1,
    Meat = 2,
    Gonad = 3,
    Muscle = 4,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Shell,
        Component::Meat,
        Component::Gonad,
        Component::Muscle,
    ];

    pub fn label(self) -> u32 {
        self as u32
    }

    pub fn from_label(label: u32) -> Option<Self> {
        Self::ALL.get((label as usize).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Shell => "shell",
            Component::Meat => "meat",
            Component::Gonad => "gonad",
            Component::Muscle => "muscle",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown component label {s:?}")))
    }
}

/// One predicted or ground-truth instance. Masks live on the full image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskInstance {
    pub mask: RleMask,
    pub bbox: BBox,
    pub component: Component,
    pub object_id: Option<u32>,
    pub score: f64,
    pub model_id: String,
    pub scale: f64,
}

impl MaskInstance {
    /// Build an instance whose box is the mask's tight bounding box.
    /// Empty masks get a 1x1 box at the origin.
    pub fn from_mask(
        mask: &BinaryMask,
        component: Component,
        object_id: Option<u32>,
        score: f64,
        model_id: impl Into<String>,
        scale: f64,
    ) -> Self {
        Self {
            mask: rle_encode(mask),
            bbox: mask.bbox().unwrap_or(BBox::from_parts(0, 0, 1, 1)),
            component,
            object_id,
            score,
            model_id: model_id.into(),
            scale,
        }
    }

    /// Check score range and that the box encloses the mask.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::data(
                "score",
                format!("{} outside [0, 1]", self.score),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::data(
                "scale",
                format!("{} must be positive", self.scale),
            ));
        }
        let mask = rle_decode(&self.mask).map_err(|e| e.at("counts"))?;
        if !self.bbox.fits(mask.height(), mask.width()) {
            return Err(Error::data(
                "bbox",
                format!("{} exceeds the image", self.bbox),
            ));
        }
        if let Some(tight) = mask.bbox() {
            if !self.bbox.contains(&tight) {
                return Err(Error::data(
                    "bbox",
                    format!("{} does not enclose mask extent {tight}", self.bbox),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(h: usize, w: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(h, w, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn rle_examples() {
        assert_eq!(rle_encode(&mask(2, 2, &[0, 0, 0, 0])).counts(), &[4]);
        assert_eq!(rle_encode(&mask(2, 2, &[1, 1, 1, 1])).counts(), &[0, 4]);
        assert_eq!(rle_encode(&mask(1, 4, &[0, 1, 1, 0])).counts(), &[1, 2, 1]);

        let zeros = rle_decode(&RleMask::new(2, 2, vec![4]).unwrap()).unwrap();
        assert_eq!(zeros, mask(2, 2, &[0, 0, 0, 0]));
        let ones = rle_decode(&RleMask::new(2, 2, vec![0, 4]).unwrap()).unwrap();
        assert_eq!(ones, mask(2, 2, &[1, 1, 1, 1]));
    }

    #[test]
    fn rle_rejects_bad_counts() {
        assert!(matches!(RleMask::new(2, 2, vec![3]), Err(Error::Format(_))));
        assert!(matches!(
            RleMask::new(2, 2, vec![1, 0, 3]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            RleMask::new(2, 2, vec![2, 3]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rle_area_counts_ones() {
        let m = mask(2, 3, &[1, 0, 1, 1, 0, 1]);
        assert_eq!(rle_encode(&m).area(), 4);
    }

    #[test]
    fn iou_examples() {
        let a = mask(2, 2, &[1, 1, 0, 0]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = mask(2, 2, &[0, 0, 1, 1]);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let empty = BinaryMask::empty(2, 2).unwrap();
        assert_eq!(iou(&empty, &empty).unwrap(), 0.0);

        // Two 2x2 blocks on a 2x3 grid sharing one column: 2 / 6.
        let left = BinaryMask::from_fn(2, 3, |_, x| x < 2).unwrap();
        let right = BinaryMask::from_fn(2, 3, |_, x| x >= 1).unwrap();
        let v = iou(&left, &right).unwrap();
        assert!((v - 2.0 / 6.0).abs() < 1e-15);
        assert!((v - 0.3333).abs() < 1e-4);

        assert!(matches!(
            iou(&a, &BinaryMask::empty(1, 4).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn expand_examples() {
        let b = BBox::new(10, 10, 20, 20).unwrap();
        assert_eq!(expand_bbox(&b, 1.0, 100, 100).unwrap(), b);
        assert_eq!(
            expand_bbox(&b, 1.2, 100, 100).unwrap(),
            BBox::new(9, 9, 21, 21).unwrap()
        );
        let corner = BBox::new(0, 0, 10, 10).unwrap();
        assert_eq!(
            expand_bbox(&corner, 1.2, 12, 12).unwrap(),
            BBox::new(0, 0, 11, 11).unwrap()
        );
    }

    #[test]
    fn expand_rejects_bad_input() {
        let b = BBox {
            x0: 3,
            y0: 3,
            x1: 3,
            y1: 5,
        };
        assert!(expand_bbox(&b, 1.2, 10, 10).is_err());
        let ok = BBox::new(1, 1, 3, 3).unwrap();
        assert!(expand_bbox(&ok, 0.9, 10, 10).is_err());
        assert!(expand_bbox(&ok, f64::NAN, 10, 10).is_err());
        assert!(expand_bbox(&ok, 1.5, 2, 2).is_err());
    }

    #[test]
    fn bbox_json_is_an_array() {
        let b = BBox::new(1, 2, 3, 4).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        assert!(serde_json::from_str::<BBox>("[3,2,3,4]").is_err());
    }

    #[test]
    fn crop_and_paste() {
        let data: Vec<f32> = (0..24).map(|v| v as f32).collect();
        let m = LogitMap::new(3, 4, 2, data).unwrap();
        let full = BBox::new(0, 0, 4, 3).unwrap();
        assert_eq!(crop(&m, &full).unwrap(), m);
        let px = crop(&m, &BBox::new(2, 1, 3, 2).unwrap()).unwrap();
        assert_eq!(px.data(), m.pixel(1, 2));
        assert!(crop(&m, &BBox::new(0, 0, 5, 1).unwrap()).is_err());

        let b = BBox::new(1, 0, 3, 2).unwrap();
        let patch = crop(&m, &b).unwrap();
        let zeros = LogitMap::zeros(3, 4, 2).unwrap();
        let pasted = paste(&zeros, &patch, &b).unwrap();
        assert_eq!(crop(&pasted, &b).unwrap(), patch);
        assert_eq!(pasted.get(2, 3, 1), 0.0);

        let zero_patch = LogitMap::zeros(2, 2, 2).unwrap();
        let cleared = paste(&m, &zero_patch, &b).unwrap();
        assert_eq!(crop(&cleared, &b).unwrap(), zero_patch);
        assert_eq!(cleared.get(2, 3, 1), m.get(2, 3, 1));

        assert!(paste(&zeros, &LogitMap::zeros(2, 2, 1).unwrap(), &b).is_err());
    }

    #[test]
    fn disjoint_pastes_commute() {
        let canvas = LogitMap::filled(4, 4, 1, 9.0).unwrap();
        let a = BBox::new(0, 0, 2, 2).unwrap();
        let b = BBox::new(2, 2, 4, 4).unwrap();
        let pa = LogitMap::filled(2, 2, 1, 1.0).unwrap();
        let pb = LogitMap::filled(2, 2, 1, -1.0).unwrap();
        let ab = paste(&paste(&canvas, &pa, &a).unwrap(), &pb, &b).unwrap();
        let ba = paste(&paste(&canvas, &pb, &b).unwrap(), &pa, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn binary_crop() {
        let m = mask(2, 3, &[1, 0, 1, 0, 1, 1]);
        let c = crop(&m, &BBox::new(1, 0, 3, 2).unwrap()).unwrap();
        assert_eq!(c, mask(2, 2, &[0, 1, 1, 1]));
    }

    #[test]
    fn scaled_box_rounds_outward() {
        let b = BBox::new(3, 5, 9, 11).unwrap();
        assert_eq!(b.scaled(0.5, 8, 8).unwrap(), BBox::new(1, 2, 5, 6).unwrap());
        assert_eq!(b.scaled(1.0, 16, 16).unwrap(), b);
        // Tiny boxes never vanish.
        let t = BBox::new(7, 7, 8, 8).unwrap();
        assert_eq!(t.scaled(0.1, 2, 2).unwrap(), BBox::new(0, 0, 1, 1).unwrap());
    }

    #[test]
    fn component_labels() {
        for c in Component::ALL {
            assert_eq!(Component::from_label(c.label()), Some(c));
            assert_eq!(c.name().parse::<Component>().unwrap(), c);
        }
        assert_eq!(Component::from_label(0), None);
        assert!("mantle".parse::<Component>().is_err());
    }

    #[test]
    fn instance_validation() {
        let m = mask(3, 3, &[0, 0, 0, 0, 1, 1, 0, 1, 0]);
        let inst = MaskInstance::from_mask(&m, Component::Meat, Some(1), 0.7, "a", 1.0);
        assert_eq!(inst.bbox, BBox::new(1, 1, 3, 3).unwrap());
        inst.validate().unwrap();
        let mut tight = inst.clone();
        tight.bbox = BBox::new(1, 1, 2, 3).unwrap();
        assert!(tight.validate().is_err());
        let mut bad_score = inst;
        bad_score.score = 1.5;
        assert!(bad_score.validate().is_err());
    }
}
