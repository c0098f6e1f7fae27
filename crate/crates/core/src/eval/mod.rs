//! Per-lesion FROC/CPM and per-image ROC evaluation.
//!
//! A ground-truth lesion is one 8-connected component of a lesion mask. A
//! lesion is detected when at least one candidate above the threshold shares
//! a pixel with it; a candidate touching no lesion is a false positive.

use std::io::Write;

use rayon::prelude::*;

use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::morphology::label_components;

/// False-positives-per-image values whose sensitivities are averaged into
/// the competition metric.
pub const REFERENCE_FPI: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// How an expert-agreement map is binarized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Agreement {
    /// Strictly more than the given fraction of experts.
    Above(f64),
    /// At least the given fraction of experts.
    AtLeast(f64),
}

/// Binarizes a confidence map in `[0, 1]`.
pub fn threshold_consensus(map: &GrayImage, level: Agreement) -> BinaryMask {
    let (w, h) = map.dims();
    let d = map.data();
    let data = match level {
        Agreement::Above(l) => d.iter().map(|&v| v > l).collect(),
        Agreement::AtLeast(l) => d.iter().map(|&v| v >= l).collect(),
    };
    BinaryMask::new(w, h, data).expect("dimensions come from the map")
}

/// The lesions of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLesions {
    pub width: usize,
    pub height: usize,
    /// Pixel indices of each lesion.
    pub lesions: Vec<Vec<usize>>,
    /// `0` for background, otherwise lesion index + 1.
    labels: Vec<u32>,
}

impl GroundTruthLesions {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let comps = label_components(mask);
        Self {
            width: comps.width,
            height: comps.height,
            lesions: comps.pixel_lists(),
            labels: comps.labels,
        }
    }

    /// An image without lesions.
    pub fn none(width: usize, height: usize) -> Self {
        Self::from_mask(&BinaryMask::empty(width, height))
    }

    pub fn count(&self) -> usize {
        self.lesions.len()
    }

    /// Lesions sharing a pixel with `pixels`, sorted and deduplicated.
    pub fn overlapping(&self, pixels: &[usize]) -> Vec<usize> {
        let mut ids: Vec<usize> = pixels
            .iter()
            .filter_map(|&i| match self.labels.get(i) {
                Some(&l) if l > 0 => Some(l as usize - 1),
                _ => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// A scored candidate region, as flat pixel indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub pixels: Vec<usize>,
    pub prob: f64,
}

impl Detection {
    pub fn from_candidate(c: &Candidate, width: usize, prob: f64) -> Self {
        Self {
            pixels: c.indices(width).collect(),
            prob,
        }
    }
}

fn check_probs<'a>(probs: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} is outside [0, 1]")));
        }
    }
    Ok(())
}

fn check_frame(d: &Detection, gt: &GroundTruthLesions) -> Result<()> {
    let n = gt.width * gt.height;
    if d.pixels.iter().any(|&i| i >= n) {
        return Err(Error::invalid(format!("detection leaves the {}x{} frame", gt.width, gt.height)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// One flag per ground-truth lesion.
    pub detected: Vec<bool>,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// Matches the detections with probability above `t` against the lesions.
pub fn match_lesions(dets: &[Detection], gt: &GroundTruthLesions, t: f64) -> Result<MatchResult> {
    check_probs(dets.iter().map(|d| &d.prob))?;
    let mut detected = vec![false; gt.count()];
    let mut fp = 0;
    for d in dets.iter().filter(|d| d.prob > t) {
        check_frame(d, gt)?;
        let hit = gt.overlapping(&d.pixels);
        if hit.is_empty() {
            fp += 1;
        }
        for l in hit {
            detected[l] = true;
        }
    }
    Ok(MatchResult {
        true_positives: detected.iter().filter(|&&b| b).count(),
        detected,
        false_positives: fp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrocPoint {
    /// Detections with probability `>= threshold` are kept.
    pub threshold: f64,
    pub fpi: f64,
    pub sensitivity: f64,
}

/// Points ordered by decreasing threshold, so FPI and sensitivity never
/// decrease along the list. The first point keeps nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    pub lesions: usize,
    pub images: usize,
}

impl FrocCurve {
    /// Staircase reading: the sensitivity of the last point whose FPI does
    /// not exceed `fpi`.
    pub fn sensitivity_at_fpi(&self, fpi: f64) -> f64 {
        self.points.iter().take_while(|p| p.fpi <= fpi).last().map_or(0.0, |p| p.sensitivity)
    }

    /// Mean sensitivity at [`REFERENCE_FPI`]. Summed as lesion counts and
    /// divided once, so equal readings average to exactly that reading.
    pub fn cpm(&self) -> f64 {
        let l = self.lesions as f64;
        let hits: f64 = REFERENCE_FPI.iter().map(|&f| (self.sensitivity_at_fpi(f) * l).round()).sum();
        hits / (REFERENCE_FPI.len() as f64 * l)
    }

    pub fn max_sensitivity(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.sensitivity)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "threshold,fpi,sensitivity")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.threshold, p.fpi, p.sensitivity)?;
        }
        Ok(())
    }
}

/// Sweeps every distinct detection probability as a threshold over a set of
/// images. Images without lesions still count in the per-image average.
pub fn froc(dets: &[Vec<Detection>], gts: &[GroundTruthLesions]) -> Result<FrocCurve> {
    if dets.len() != gts.len() {
        return Err(Error::invalid(format!("{} detection lists for {} images", dets.len(), gts.len())));
    }
    let lesions: usize = gts.iter().map(GroundTruthLesions::count).sum();
    if lesions == 0 {
        return Err(Error::invalid("no ground-truth lesions in the evaluation set"));
    }
    // Per image: the best probability reaching each lesion, and the
    // probabilities of candidates touching none.
    let per_image = dets
        .par_iter()
        .zip(gts)
        .map(|(ds, gt)| -> Result<(Vec<f64>, Vec<f64>)> {
            check_probs(ds.iter().map(|d| &d.prob))?;
            let mut best = vec![f64::NEG_INFINITY; gt.count()];
            let mut fps = Vec::new();
            for d in ds {
                check_frame(d, gt)?;
                let hit = gt.overlapping(&d.pixels);
                if hit.is_empty() {
                    fps.push(d.prob);
                }
                for l in hit {
                    best[l] = best[l].max(d.prob);
                }
            }
            Ok((best, fps))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hits: Vec<f64> = per_image.iter().flat_map(|(b, _)| b.iter().copied()).filter(|p| p.is_finite()).collect();
    let mut fps: Vec<f64> = per_image.iter().flat_map(|(_, f)| f.iter().copied()).collect();
    let mut thresholds: Vec<f64> = dets.iter().flatten().map(|d| d.prob).collect();
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    hits.sort_by(desc);
    fps.sort_by(desc);
    thresholds.sort_by(desc);
    thresholds.dedup();

    let images = gts.len();
    let mut points = vec![FrocPoint {
        threshold: f64::INFINITY,
        fpi: 0.0,
        sensitivity: 0.0,
    }];
    let (mut h, mut f) = (0, 0);
    for t in thresholds {
        while h < hits.len() && hits[h] >= t {
            h += 1;
        }
        while f < fps.len() && fps[f] >= t {
            f += 1;
        }
        points.push(FrocPoint {
            threshold: t,
            fpi: f as f64 / images as f64,
            sensitivity: h as f64 / lesions as f64,
        });
    }
    Ok(FrocCurve { points, lesions, images })
}

/// Image-level probability: the largest candidate probability, or 0 when
/// there are no candidates.
pub fn image_probability(probs: &[f64]) -> f64 {
    probs.iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Points from `(0, 0)` to `(1, 1)` by decreasing threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Best sensitivity among operating points whose specificity is at
    /// least `sp`.
    pub fn se_at_sp(&self, sp: f64) -> f64 {
        self.points.iter().filter(|p| 1.0 - p.fpr >= sp).map(|p| p.tpr).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let npos = labels.iter().filter(|&&l| l).count();
    let nneg = labels.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(Error::DegenerateClassBalance(format!("{npos} positive and {nneg} negative images")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // A run of tied scores moves diagonally in one step.
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let p = RocPoint {
            threshold: t,
            fpr: fp as f64 / nneg as f64,
            tpr: tp as f64 / npos as f64,
        };
        let prev = points.last().expect("starts with the origin");
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}
