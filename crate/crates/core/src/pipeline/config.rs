//! Pipeline configuration, read from and written to TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SynthParams;
use crate::candidates::CandidateParams;
use crate::cnn::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::Agreement;
use crate::features::{FeatureParams, HCF_DIM};
use crate::forest::ForestConfig;

/// Which feature block feeds the random forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// The 63 hand-crafted descriptors.
    Hcf,
    /// The 128 learned CNN features.
    Cnn,
    /// Both, hand-crafted first.
    #[default]
    Hybrid,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Hcf, FeatureMode::Cnn, FeatureMode::Hybrid];

    pub fn uses_hcf(self) -> bool {
        self != FeatureMode::Cnn
    }

    pub fn uses_cnn(self) -> bool {
        self != FeatureMode::Hcf
    }

    /// Length of the feature vector.
    pub fn dim(self) -> usize {
        usize::from(self.uses_hcf()) * HCF_DIM + usize::from(self.uses_cnn()) * crate::cnn::N_FEATURES
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Hcf => "hcf",
            FeatureMode::Cnn => "cnn",
            FeatureMode::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature mode {s:?} (expected hcf, cnn or hybrid)")))
    }
}

/// How expert confidence maps become ground-truth lesions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fraction of experts that must agree on a lesion pixel.
    pub lesion_agreement: f64,
    /// Require strictly more than `lesion_agreement` (otherwise at least).
    pub strict: bool,
    /// Specificity at which the image-level sensitivity is reported.
    pub specificity: f64,
    /// False positives per image at which the lesion sensitivity is
    /// reported.
    pub fpi: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lesion_agreement: 0.25,
            strict: true,
            specificity: 0.5,
            fpi: 1.0,
        }
    }
}

impl EvalConfig {
    pub fn agreement(&self) -> Agreement {
        if self.strict {
            Agreement::Above(self.lesion_agreement)
        } else {
            Agreement::AtLeast(self.lesion_agreement)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. Every randomized stage derives its stream from it, and
    /// it overrides the seeds of the `cnn` and `forest` sections.
    pub seed: u64,
    pub mode: FeatureMode,
    /// Default lightness threshold for field-of-view estimation.
    pub fov_threshold: f64,
    pub candidates: CandidateParams,
    pub cnn: TrainConfig,
    pub features: FeatureParams,
    pub forest: ForestConfig,
    pub evaluation: EvalConfig,
    pub synth: SynthParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: FeatureMode::Hybrid,
            fov_threshold: 0.15,
            candidates: CandidateParams::default(),
            cnn: TrainConfig::default(),
            features: FeatureParams::default(),
            forest: ForestConfig::default(),
            evaluation: EvalConfig::default(),
            synth: SynthParams::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, e: Error| Error::Config(format!("[{section}] {e}"));
        if !(self.fov_threshold > 0.0 && self.fov_threshold < 1.0) {
            return Err(Error::Config(format!("fov_threshold must lie in (0, 1), got {}", self.fov_threshold)));
        }
        self.candidates.validate().map_err(|e| wrap("candidates", e))?;
        self.cnn.validate().map_err(|e| wrap("cnn", e))?;
        self.features.validate().map_err(|e| wrap("features", e))?;
        self.synth.validate().map_err(|e| wrap("synth", e))?;
        if self.forest.trees == 0 || self.forest.grid.contains(&0) || self.forest.max_features == Some(0) {
            return Err(Error::Config("[forest] tree counts and max_features must be at least 1".into()));
        }
        let ev = &self.evaluation;
        if !(0.0..=1.0).contains(&ev.lesion_agreement) || !(0.0..=1.0).contains(&ev.specificity) {
            return Err(Error::Config("[evaluation] agreement and specificity must lie in [0, 1]".into()));
        }
        positive("[evaluation] fpi", ev.fpi)?;
        Ok(())
    }

    /// The CNN settings with the master seed applied.
    pub fn cnn_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.cnn.clone()
        }
    }

    /// The forest settings with the master seed applied.
    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            seed: self.seed,
            ..self.forest.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}
