//! Red lesion detection in retinal fundus photographs.
//!
//! The pipeline has four stages:
//!
//! 1. [`candidates`]: unsupervised multiscale detection of dark blob-like
//!    structures (illumination correction, directional closings and an
//!    adaptive threshold that caps the number of components per scale).
//! 2. [`patches`] and [`cnn`]: a small convolutional network trained from
//!    scratch on color-equalized patches around each candidate; its fully
//!    connected layer provides 128 learned features.
//! 3. [`features`]: a bank of 63 hand-crafted intensity and shape
//!    descriptors per candidate.
//! 4. [`forest`]: a random forest over the standardized hybrid vector, whose
//!    averaged tree probabilities score each candidate; the image-level
//!    score is the maximum candidate probability.
//!
//! [`eval`] provides per-lesion FROC/CPM and per-image ROC evaluation, and
//! [`pipeline`] ties everything together (configuration, dataset loading,
//! synthetic data, training and detection).

pub mod candidates;
pub mod cnn;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod image;
pub mod morphology;
pub mod patches;
pub mod pipeline;
pub mod rng;

pub use crate::candidates::{Candidate, CandidateParams, CandidateSet, ScoreMap};
pub use crate::cnn::{CnnModel, TrainConfig};
pub use crate::error::{Error, Result};
pub use crate::eval::{FrocCurve, RocCurve};
pub use crate::features::{DerivedImageBundle, FeatureTable, HcfVector, HCF_DIM, HCF_NAMES};
pub use crate::forest::{Forest, ForestConfig, Standardizer};
pub use crate::image::{BinaryMask, FovMask, FundusImage, GrayImage};
pub use crate::patches::{LabeledPatchSet, Patch};
pub use crate::pipeline::{FeatureMode, PipelineConfig};

/// Width in pixels of the reference resolution all size parameters are
/// expressed at.
pub const BASE_FOV_WIDTH: f64 = 1425.0;
