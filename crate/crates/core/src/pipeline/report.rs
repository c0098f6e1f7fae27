//! Evaluation of detections and their on-disk form.
//!
//! A detection directory holds `detections.csv` (one row per candidate:
//! `image_id,candidate_id,probability`), `images.csv`
//! (`image_id,probability`) and `candidates/<image_id>.png`, a 16-bit label
//! map whose values are candidate ids.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, FeatureMode};
use super::run::ImageDetections;
use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::eval::{froc, roc, FrocCurve, GroundTruthLesions, RocCurve};
use crate::image::io::{load_label_map, save_label_map};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSummary {
    pub images: usize,
    pub lesions: usize,
    pub cpm: f64,
    /// Sensitivity read at `fpi` false positives per image.
    pub fpi: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub images: usize,
    pub positives: usize,
    pub auc: f64,
    /// Sensitivity at this specificity.
    pub specificity: f64,
    pub sensitivity: f64,
}

/// Machine-readable report, written as TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<FeatureMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lesion: Option<LesionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSummary>,
}

impl EvaluationSummary {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("summary", e.to_string()))
    }
}

pub fn evaluate_lesions(dets: &[ImageDetections], gts: &[GroundTruthLesions], eval: &EvalConfig) -> Result<(FrocCurve, LesionSummary)> {
    let per_image: Vec<_> = dets.iter().map(ImageDetections::detections).collect();
    let curve = froc(&per_image, gts)?;
    let summary = LesionSummary {
        images: curve.images,
        lesions: curve.lesions,
        cpm: curve.cpm(),
        fpi: eval.fpi,
        sensitivity: curve.sensitivity_at_fpi(eval.fpi),
    };
    Ok((curve, summary))
}

pub fn evaluate_images(probs: &[f64], labels: &[bool], eval: &EvalConfig) -> Result<(RocCurve, ImageSummary)> {
    let curve = roc(probs, labels)?;
    let summary = ImageSummary {
        images: labels.len(),
        positives: labels.iter().filter(|&&l| l).count(),
        auc: curve.auc,
        specificity: eval.specificity,
        sensitivity: curve.se_at_sp(eval.specificity),
    };
    Ok((curve, summary))
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("detections", e.to_string())
}

pub fn write_detections(dir: impl AsRef<Path>, dets: &[ImageDetections]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("candidates"))?;
    let mut cand = csv::Writer::from_path(dir.join("detections.csv")).map_err(csv_err)?;
    let mut img = csv::Writer::from_path(dir.join("images.csv")).map_err(csv_err)?;
    cand.write_record(["image_id", "candidate_id", "probability"]).map_err(csv_err)?;
    img.write_record(["image_id", "probability"]).map_err(csv_err)?;
    for d in dets {
        for (c, p) in d.candidates.iter().zip(&d.probabilities) {
            cand.write_record([d.id.clone(), c.id.to_string(), p.to_string()]).map_err(csv_err)?;
        }
        img.write_record([d.id.clone(), d.image_probability.to_string()]).map_err(csv_err)?;
        let cs = &d.candidates;
        save_label_map(dir.join("candidates").join(format!("{}.png", d.id)), cs.width, cs.height, &cs.label_map()?)?;
    }
    cand.flush()?;
    img.flush()?;
    Ok(())
}

/// Reads a detection directory back, in the order of `images.csv`.
pub fn read_detections(dir: impl AsRef<Path>) -> Result<Vec<ImageDetections>> {
    let dir = dir.as_ref();
    let mut probs: HashMap<String, HashMap<u32, f64>> = HashMap::new();
    let mut rd = csv::Reader::from_path(dir.join("detections.csv")).map_err(csv_err)?;
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let bad = || Error::format("detections", format!("bad row {:?}", rec));
        let id: u32 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let p: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        probs.entry(rec[0].to_string()).or_default().insert(id, p);
    }
    let mut out = Vec::new();
    let mut rd = csv::Reader::from_path(dir.join("images.csv")).map_err(csv_err)?;
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let image_id = rec[0].to_string();
        let image_probability: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("detections", format!("bad image row {:?}", rec)))?;
        let (w, h, labels) = load_label_map(dir.join("candidates").join(format!("{image_id}.png")))?;
        let candidates = CandidateSet::from_label_map(w, h, &labels)?;
        let table = probs.remove(&image_id).unwrap_or_default();
        let probabilities = candidates
            .iter()
            .map(|c| {
                table
                    .get(&c.id)
                    .copied()
                    .ok_or_else(|| Error::format("detections", format!("no probability for {image_id}/{}", c.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ImageDetections {
            id: image_id,
            candidates,
            probabilities,
            image_probability,
        });
    }
    Ok(out)
}
