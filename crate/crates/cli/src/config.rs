use std::path::PathBuf;

use segfuse_core::{GroupingMode, Normalization};
use serde::{Deserialize, Serialize};

/// Where model weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// AP-derived weights from a named calibration manifest.
    Ap,
    /// Equal weights for every model.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Vertical,
    Horizontal,
    Both,
}

impl Grouping {
    pub fn modes(self) -> Vec<GroupingMode> {
        match self {
            Grouping::Vertical => vec![GroupingMode::Vertical],
            Grouping::Horizontal => vec![GroupingMode::Horizontal],
            Grouping::Both => vec![GroupingMode::Vertical, GroupingMode::Horizontal],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationArg {
    Fraction,
    Minmax,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::Fraction => Normalization::Fraction,
            NormalizationArg::Minmax => Normalization::MinMax,
        }
    }
}

/// Local-attention gate outside every object region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BetaOutside {
    /// 0.5: global and local logits blend evenly.
    Neutral,
    /// 1.0: global logits pass through untouched.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub iou_threshold: f64,
    pub normalization: NormalizationArg,
    pub grouping: Grouping,
    pub weighting: Weighting,
    pub attention_factor: f64,
    pub binarize_threshold: f64,
    pub alpha_fallback: f64,
    pub bbox_expansion: f64,
    pub beta_outside: BetaOutside,
    /// Replace computed local attention with a constant gate.
    pub beta_override: Option<f64>,
    /// Scales to use; empty means every scale in the manifest.
    pub scales: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.6,
            normalization: NormalizationArg::Fraction,
            grouping: Grouping::Vertical,
            weighting: Weighting::Ap,
            attention_factor: 1.0,
            binarize_threshold: 0.5,
            alpha_fallback: 0.5,
            bbox_expansion: 1.2,
            beta_outside: BetaOutside::Neutral,
            beta_override: None,
            scales: vec![],
            seed: 0,
            workers: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// A configuration value outside its documented range.
#[derive(Debug, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(ConfigError(format!(
                "--iou-threshold {} must lie in (0, 1]",
                self.iou_threshold
            )));
        }
        if !open_unit(self.binarize_threshold) {
            return Err(ConfigError(format!(
                "--binarize-threshold {} must lie in (0, 1)",
                self.binarize_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_fallback) {
            return Err(ConfigError(format!(
                "--alpha-fallback {} must lie in [0, 1]",
                self.alpha_fallback
            )));
        }
        if let Some(b) = self.beta_override {
            if !(0.0..=1.0).contains(&b) {
                return Err(ConfigError(format!("--beta {b} must lie in [0, 1]")));
            }
        }
        if !(self.attention_factor > 0.0 && self.attention_factor.is_finite()) {
            return Err(ConfigError(format!(
                "--attention-factor {} must be positive",
                self.attention_factor
            )));
        }
        if !(self.bbox_expansion >= 1.0 && self.bbox_expansion.is_finite()) {
            return Err(ConfigError(format!(
                "--bbox-expansion {} must be at least 1",
                self.bbox_expansion
            )));
        }
        if self.scales.iter().any(|s| !(*s > 0.0)) || self.scales.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(ConfigError(
                "--scales must be positive and strictly increasing".into(),
            ));
        }
        if self.workers == 0 {
            return Err(ConfigError("--workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.iou_threshold, 0.6);
        assert_eq!(c.bbox_expansion, 1.2);
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = [
            PipelineConfig {
                iou_threshold: 0.0,
                ..Default::default()
            },
            PipelineConfig {
                binarize_threshold: 1.0,
                ..Default::default()
            },
            PipelineConfig {
                attention_factor: 0.0,
                ..Default::default()
            },
            PipelineConfig {
                bbox_expansion: 0.9,
                ..Default::default()
            },
            PipelineConfig {
                scales: vec![1.0, 0.5],
                ..Default::default()
            },
            PipelineConfig {
                alpha_fallback: 1.5,
                ..Default::default()
            },
            PipelineConfig {
                beta_override: Some(-0.1),
                ..Default::default()
            },
            PipelineConfig {
                workers: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
