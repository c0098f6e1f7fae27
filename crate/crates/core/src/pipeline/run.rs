//! Training and detection over whole images.
//!
//! Each image is first reduced to an [`ImageAnalysis`]: its candidates, the
//! raw CNN patches and the hand-crafted vectors. Everything downstream
//! (patch sets, feature tables, forest training, scoring) works on those,
//! so the three feature modes share candidates and trainer by construction.

use rayon::prelude::*;

use super::config::{FeatureMode, PipelineConfig};
use super::dataset::{Dataset, LoadedImage};
use crate::candidates::{detect_candidates, CandidateSet};
use crate::cnn::{self, CnnModel, TrainLog, N_FEATURES};
use crate::error::{Error, Result};
use crate::eval::{Detection, GroundTruthLesions};
use crate::features::{derive_images, hcf_vectors, FeatureRow, FeatureTable, HcfVector, HCF_NAMES};
use crate::forest::{select_trees, train_forest, Forest, ForestConfig, TreeSelection};
use crate::image::{color_equalize, EqualizeParams};
use crate::patches::{augmented_set, extract_patch, label_candidate, LabeledPatchSet, Patch};

/// Per-image material for training and scoring.
#[derive(Debug, Clone)]
pub struct ImageAnalysis {
    pub id: String,
    pub candidates: CandidateSet,
    /// One label per candidate when the image has lesion annotations.
    pub candidate_labels: Option<Vec<u8>>,
    pub image_label: Option<u8>,
    pub ground_truth: Option<GroundTruthLesions>,
    /// Empty unless the analysis was run for a mode using them.
    pub hcf: Vec<HcfVector>,
    /// Raw (uncentred) patches; empty unless the mode uses the CNN.
    pub patches: Vec<Patch>,
}

impl ImageAnalysis {
    pub fn is_supervised(&self) -> bool {
        self.candidate_labels.is_some()
    }
}

/// Detects candidates and computes the material `mode` needs.
pub fn analyze(img: &LoadedImage, config: &PipelineConfig, mode: FeatureMode) -> Result<ImageAnalysis> {
    let candidates = detect_candidates(&img.image, &img.fov, &config.candidates)?;
    let candidate_labels = img
        .lesion_mask
        .as_ref()
        .map(|m| candidates.iter().map(|c| label_candidate(c, m)).collect());
    let hcf = if mode.uses_hcf() && !candidates.is_empty() {
        let bundle = derive_images(&img.image, &img.fov, img.vessels.as_ref(), &config.features)?;
        hcf_vectors(&candidates.candidates, &bundle, &config.features)?
    } else {
        Vec::new()
    };
    let patches = if mode.uses_cnn() && !candidates.is_empty() {
        let eq = color_equalize(&img.image, &img.fov, &EqualizeParams::for_fov_width(img.fov.fov_width()))?;
        candidates.iter().map(|c| extract_patch(&eq, c, &img.id)).collect()
    } else {
        Vec::new()
    };
    Ok(ImageAnalysis {
        id: img.id.clone(),
        candidate_labels,
        image_label: img.label,
        ground_truth: img.ground_truth(),
        candidates,
        hcf,
        patches,
    })
}

/// Loads and analyzes every record of a dataset, in parallel.
pub fn analyze_dataset(ds: &Dataset, config: &PipelineConfig, mode: FeatureMode) -> Result<Vec<ImageAnalysis>> {
    (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let img = ds.load(i)?;
            analyze(&img, config, mode).map_err(|e| e.in_record(&img.id))
        })
        .collect()
}

/// Column names of the feature vector of `mode`.
pub fn feature_names(mode: FeatureMode) -> Vec<String> {
    let mut names = Vec::with_capacity(mode.dim());
    if mode.uses_hcf() {
        names.extend(HCF_NAMES.iter().map(|s| s.to_string()));
    }
    if mode.uses_cnn() {
        names.extend((0..N_FEATURES).map(|k| format!("cnn_{k:03}")));
    }
    names
}

/// One row per candidate of every analysis: hand-crafted block first, then
/// the CNN block, as `mode` requires.
pub fn feature_table(analyses: &[ImageAnalysis], mode: FeatureMode, cnn: Option<&CnnModel>) -> Result<FeatureTable> {
    if mode.uses_cnn() && cnn.is_none() {
        return Err(Error::invalid(format!("the {mode} features need a trained CNN")));
    }
    let mut table = FeatureTable::new(feature_names(mode));
    for a in analyses {
        let n = a.candidates.len();
        if (mode.uses_hcf() && a.hcf.len() != n) || (mode.uses_cnn() && a.patches.len() != n) {
            return Err(Error::invalid(format!("image {} was not analyzed for {mode} features", a.id)));
        }
        let learned = match cnn {
            Some(m) if mode.uses_cnn() => m.extract_features_batch(&a.patches),
            _ => Vec::new(),
        };
        for (k, c) in a.candidates.iter().enumerate() {
            let mut values = Vec::with_capacity(mode.dim());
            if mode.uses_hcf() {
                values.extend_from_slice(&a.hcf[k].values);
            }
            if mode.uses_cnn() {
                values.extend_from_slice(&learned[k]);
            }
            table.push(FeatureRow {
                image_id: a.id.clone(),
                candidate_id: c.id,
                label: a.candidate_labels.as_ref().map(|l| l[k]),
                values,
            })?;
        }
    }
    Ok(table)
}

/// The eightfold-augmented, mean-centred patches of every supervised image.
pub fn cnn_training_set(analyses: &[ImageAnalysis], beta: Option<f64>) -> Result<LabeledPatchSet> {
    let mut base = Vec::new();
    for a in analyses {
        let Some(labels) = &a.candidate_labels else { continue };
        if a.patches.len() != a.candidates.len() {
            return Err(Error::invalid(format!("image {} has no patches", a.id)));
        }
        base.extend(a.patches.iter().cloned().zip(labels.iter().copied()));
    }
    augmented_set(&base, beta)
}

/// Fits a forest on a labeled table. With a nonempty tree grid the number of
/// trees is chosen by out-of-bag error.
pub fn fit_forest(table: &FeatureTable, cfg: &ForestConfig) -> Result<(Forest, Option<TreeSelection>)> {
    let x = table.matrix();
    let y = table.labels()?;
    if cfg.grid.is_empty() {
        Ok((train_forest(&x, &y, cfg)?, None))
    } else {
        let (f, sel) = select_trees(&x, &y, cfg)?;
        Ok((f, Some(sel)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub mode: FeatureMode,
    pub cnn: Option<CnnModel>,
    pub forest: Forest,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub cnn_log: Option<TrainLog>,
    pub tree_selection: Option<TreeSelection>,
    pub candidates: usize,
    pub positives: usize,
}

/// Trains the CNN on the patches of the supervised images.
pub fn train_cnn_stage(analyses: &[ImageAnalysis], config: &PipelineConfig) -> Result<cnn::TrainedCnn> {
    let cfg = config.cnn_config();
    let set = cnn_training_set(analyses, cfg.beta)?;
    log::info!("training the CNN on {} patches ({} lesion)", set.len(), set.positives());
    cnn::train(&set, &cfg)
}

/// Trains the forest for `mode`, reusing an already trained CNN.
pub fn train_forest_stage(
    analyses: &[ImageAnalysis],
    config: &PipelineConfig,
    mode: FeatureMode,
    cnn: Option<&CnnModel>,
) -> Result<(TrainedModels, TrainingReport)> {
    let supervised: Vec<ImageAnalysis> = analyses.iter().filter(|a| a.is_supervised()).cloned().collect();
    let table = feature_table(&supervised, mode, cnn)?;
    let labels = table.labels()?;
    let (forest, tree_selection) = fit_forest(&table, &config.forest_config())?;
    let models = TrainedModels {
        mode,
        cnn: if mode.uses_cnn() { cnn.cloned() } else { None },
        forest,
    };
    let report = TrainingReport {
        cnn_log: None,
        tree_selection,
        candidates: labels.len(),
        positives: labels.iter().filter(|&&l| l == 1).count(),
    };
    Ok((models, report))
}

/// Full training for `config.mode`: CNN first when needed, then the forest.
pub fn train_models(analyses: &[ImageAnalysis], config: &PipelineConfig) -> Result<(TrainedModels, TrainingReport)> {
    let trained = if config.mode.uses_cnn() {
        Some(train_cnn_stage(analyses, config)?)
    } else {
        None
    };
    let (models, mut report) = train_forest_stage(analyses, config, config.mode, trained.as_ref().map(|t| &t.model))?;
    report.cnn_log = trained.map(|t| t.log);
    Ok((models, report))
}

/// Scored candidates of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub id: String,
    pub candidates: CandidateSet,
    /// Lesion probability of each candidate, in candidate order.
    pub probabilities: Vec<f64>,
    /// The largest candidate probability, 0 without candidates.
    pub image_probability: f64,
}

impl ImageDetections {
    pub fn detections(&self) -> Vec<Detection> {
        self.candidates
            .iter()
            .zip(&self.probabilities)
            .map(|(c, &p)| Detection::from_candidate(c, self.candidates.width, p))
            .collect()
    }
}

/// Scores every candidate of an analyzed image with the forest.
pub fn run_detect(analysis: &ImageAnalysis, models: &TrainedModels) -> Result<ImageDetections> {
    let mode = models.mode;
    if models.forest.n_features != mode.dim() {
        return Err(Error::invalid(format!(
            "the forest expects {} features but the {mode} vector has {}",
            models.forest.n_features,
            mode.dim()
        )));
    }
    let table = feature_table(std::slice::from_ref(analysis), mode, models.cnn.as_ref())?;
    let probabilities = models.forest.predict_proba_all(&table.matrix())?;
    Ok(ImageDetections {
        id: analysis.id.clone(),
        candidates: analysis.candidates.clone(),
        image_probability: crate::eval::image_probability(&probabilities),
        probabilities,
    })
}
