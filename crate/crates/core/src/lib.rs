//! Deterministic fusion of instance-segmentation predictions from several
//! models and several inference scales.
//!
//! The pipeline stages, bottom up:
//!
//! - [`tensor`]: `f32` grids, pixel-wise kernels, bilinear resampling, softmax.
//! - [`mask`]: binary masks, the row-major RLE codec, IoU, boxes, crop/paste.
//! - [`metrics`]: single-threshold mask AP and per-group AP tables.
//! - [`fusion`]: AP-derived model weights and weighted mask/logit averaging.
//! - [`attention`]: difference-based local attention and global-local blending.
//! - [`hierarchy`]: coarse-to-fine fusion over a chain of scales.
//! - [`io`]: tensor files, JSON manifests, PPM overlays.
//!
//! All reductions run in a fixed order, so every result is bit-reproducible.

// `!(a < b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod bundle;
pub mod error;
pub mod fusion;
pub mod hierarchy;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod tensor;

pub use attention::{AttentionConfig, DifferenceMatrix, LocalLogits, RegionAttention};
pub use bundle::PredictionBundle;
pub use error::{Error, Result};
pub use fusion::{FusionWeights, MaskGroup, SoftMask};
pub use hierarchy::{ScaleChain, ScaleEntry};
pub use mask::{BBox, BinaryMask, Component, MaskInstance, RleMask};
pub use metrics::{ApTable, GroupKey, GroupingMode, MatchResult, Normalization};
pub use tensor::{AttentionMap, LabelGrid, LogitMap, Matrix};
