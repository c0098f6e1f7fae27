//! Unsupervised multiscale red-lesion candidate detection.
//!
//! The green band is illumination-corrected, smoothed and closed with line
//! elements of increasing length. At each length the closing minus the
//! smoothed image is a score map whose adaptive threshold keeps at most `K`
//! blobs; the per-scale binary maps are merged and small components dropped.

mod closing;
mod geometry;
mod threshold;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{expand_fov, gaussian_blur, walter_transform, FovMask, FundusImage, GrayImage, WalterParams};
use crate::morphology::label_components;

pub use self::closing::{
    dilate_gray, directional_closing, erode_gray, line_offsets, min_directional_closing, DEFAULT_ANGLES,
};
pub use self::geometry::{bounding_box, centroid, moment_ellipse, BoundingBox, Ellipse};
pub use self::threshold::{select_threshold, threshold_map, ThresholdBranch, ThresholdChoice};

/// Parameters of the candidate detector, expressed at the reference
/// resolution (see [`CandidateParams::scaled_to`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateParams {
    /// Structuring element lengths, ascending.
    pub scales: Vec<usize>,
    /// Maximum number of components kept per scale (`K`).
    pub max_per_scale: usize,
    /// Minimum candidate area in pixels (`px`).
    pub min_area: usize,
    /// Line orientations in degrees.
    pub angles: Vec<f64>,
    /// Grid spacing of the threshold scan.
    pub threshold_step: f64,
    /// Threshold used when every scanned level leaves fewer than `K`
    /// components. Defaults to the map minimum plus one step.
    pub lower_threshold: Option<f64>,
    /// Threshold used when every scanned level leaves more than `K`
    /// components. Defaults to the map maximum.
    pub upper_threshold: Option<f64>,
    /// Standard deviation of the pre-closing blur.
    pub blur_sigma: f64,
}

impl Default for CandidateParams {
    fn default() -> Self {
        Self {
            scales: (1..=20).map(|k| 3 * k).collect(),
            max_per_scale: 120,
            min_area: 5,
            angles: DEFAULT_ANGLES.to_vec(),
            threshold_step: 0.002,
            lower_threshold: None,
            upper_threshold: None,
            blur_sigma: 5.0,
        }
    }
}

impl CandidateParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::invalid("scales must be a nonempty set of positive lengths"));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("scales must be strictly ascending"));
        }
        if self.max_per_scale == 0 || self.min_area == 0 {
            return Err(Error::invalid("max_per_scale and min_area must be at least 1"));
        }
        if self.angles.is_empty() {
            return Err(Error::invalid("at least one angle is required"));
        }
        if !(self.threshold_step > 0.0 && self.threshold_step.is_finite()) {
            return Err(Error::invalid("threshold_step must be positive"));
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid("blur_sigma must be positive"));
        }
        Ok(())
    }

    /// Adapts lengths and blur to a field of view `fov_width` pixels wide.
    /// Lengths are multiplied by `fov_width / 1425`, rounded, clamped to at
    /// least 3 and deduplicated.
    pub fn scaled_to(&self, fov_width: usize) -> Self {
        let f = fov_width as f64 / crate::BASE_FOV_WIDTH;
        let mut scales: Vec<usize> = self
            .scales
            .iter()
            .map(|&l| ((l as f64 * f).round() as usize).max(3))
            .collect();
        scales.sort_unstable();
        scales.dedup();
        Self {
            scales,
            blur_sigma: self.blur_sigma * f,
            ..self.clone()
        }
    }
}

/// Nonnegative per-pixel candidate score, zero outside the field of view.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap(GrayImage);

impl ScoreMap {
    /// Wraps an image after checking that its values are nonnegative.
    pub fn new(image: GrayImage) -> Result<Self> {
        if image.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("score maps must be nonnegative"));
        }
        Ok(Self(image))
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn as_image(&self) -> &GrayImage {
        &self.0
    }

    pub fn into_image(self) -> GrayImage {
        self.0
    }
}

/// `closed - reference`, clamped at zero and zeroed outside the field of view.
pub fn candidate_score(closed: &GrayImage, reference: &GrayImage, fov: &FovMask) -> Result<ScoreMap> {
    reference.check_same_dims(closed.dims())?;
    reference.check_same_dims(fov.dims())?;
    let data = closed
        .data()
        .iter()
        .zip(reference.data())
        .enumerate()
        .map(|(i, (&c, &r))| if fov.contains_index(i) { (c - r).max(0.0) } else { 0.0 })
        .collect();
    Ok(ScoreMap(GrayImage::from_raw(closed.width(), closed.height(), data)))
}

/// A connected region proposed as a possible lesion.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// 1-based identifier, unique within its image.
    pub id: u32,
    /// `(x, y)` coordinates in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
    /// `(x, y)` centre of mass.
    pub centroid: (f64, f64),
    pub major_axis: f64,
    pub minor_axis: f64,
    pub orientation: f64,
    pub eccentricity: f64,
    /// Structuring element lengths whose binary map overlaps this region.
    pub source_scales: Vec<usize>,
}

impl Candidate {
    pub fn from_pixels(id: u32, pixels: Vec<(usize, usize)>, source_scales: Vec<usize>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::invalid("a candidate needs at least one pixel"));
        }
        let e = moment_ellipse(&pixels);
        Ok(Self {
            id,
            bbox: bounding_box(&pixels),
            centroid: centroid(&pixels),
            major_axis: e.major_axis,
            minor_axis: e.minor_axis,
            orientation: e.orientation,
            eccentricity: e.eccentricity,
            pixels,
            source_scales,
        })
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Linear pixel indices for an image of the given width.
    pub fn indices(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        self.pixels.iter().map(move |&(x, y)| y * width + x)
    }
}

/// Outcome of one structuring-element length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub length: usize,
    pub threshold: ThresholdChoice,
}

/// All candidates of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub width: usize,
    pub height: usize,
    pub candidates: Vec<Candidate>,
    pub scales: Vec<ScaleReport>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Candidate> {
        self.candidates.iter()
    }

    /// Label image with candidate ids (0 is background).
    pub fn label_map(&self) -> Result<Vec<u16>> {
        let mut out = vec![0u16; self.width * self.height];
        for c in &self.candidates {
            let id = u16::try_from(c.id).map_err(|_| Error::invalid("more than 65535 candidates"))?;
            for i in c.indices(self.width) {
                out[i] = id;
            }
        }
        Ok(out)
    }

    /// Rebuilds candidates from a label image; each nonzero label becomes one
    /// candidate with that id. Scale provenance is not recoverable.
    pub fn from_label_map(width: usize, height: usize, labels: &[u16]) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::invalid("label map length does not match its dimensions"));
        }
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); max + 1];
        for (i, &l) in labels.iter().enumerate() {
            if l > 0 {
                lists[l as usize].push((i % width, i / width));
            }
        }
        let candidates = lists
            .into_iter()
            .enumerate()
            .filter(|(_, px)| !px.is_empty())
            .map(|(id, px)| Candidate::from_pixels(id as u32, px, Vec::new()))
            .collect::<Result<_>>()?;
        Ok(Self {
            width,
            height,
            candidates,
            scales: Vec::new(),
        })
    }
}

/// Illumination-corrected green band used by the detector before blurring.
pub fn corrected_green(image: &FundusImage, fov: &FovMask) -> Result<GrayImage> {
    image.green().check_same_dims(fov.dims())?;
    let expanded = expand_fov(image.green(), fov)?;
    walter_transform(&expanded, fov, &WalterParams::for_fov_width(fov.fov_width()))
}

/// Runs the full detector. `params` are given at the reference resolution
/// and are rescaled to the field of view internally.
pub fn detect_candidates(image: &FundusImage, fov: &FovMask, params: &CandidateParams) -> Result<CandidateSet> {
    params.validate()?;
    let p = params.scaled_to(fov.fov_width());
    let corrected = corrected_green(image, fov)?;
    let blurred = gaussian_blur(&corrected, p.blur_sigma)?;
    detect_on_prepared(&blurred, fov, &p)
}

/// Detector stages after preprocessing; `params` are used as given.
pub fn detect_on_prepared(blurred: &GrayImage, fov: &FovMask, params: &CandidateParams) -> Result<CandidateSet> {
    params.validate()?;
    blurred.check_same_dims(fov.dims())?;
    let (w, h) = blurred.dims();

    let per_scale: Vec<(ScaleReport, Vec<bool>)> = params
        .scales
        .par_iter()
        .map(|&l| {
            let closed = min_directional_closing(blurred, l, &params.angles);
            let score = candidate_score(&closed, blurred, fov)?;
            let choice = select_threshold(
                &score,
                params.max_per_scale,
                params.threshold_step,
                params.lower_threshold,
                params.upper_threshold,
            );
            let mut bw = threshold_map(&score, params.threshold_step, choice.value);
            for (i, b) in bw.data_mut().iter_mut().enumerate() {
                *b &= fov.contains_index(i);
            }
            let report = ScaleReport {
                length: l,
                threshold: choice,
            };
            Ok((report, bw.data().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut union = crate::image::BinaryMask::empty(w, h);
    for (_, bw) in &per_scale {
        for (u, &b) in union.data_mut().iter_mut().zip(bw) {
            *u |= b;
        }
    }

    let comps = label_components(&union);
    let mut candidates = Vec::new();
    for list in comps.pixel_lists() {
        if list.len() < params.min_area {
            continue;
        }
        let sources = per_scale
            .iter()
            .filter(|(_, bw)| list.iter().any(|&i| bw[i]))
            .map(|(r, _)| r.length)
            .collect();
        let pixels = list.iter().map(|&i| (i % w, i / w)).collect();
        candidates.push(Candidate::from_pixels(candidates.len() as u32 + 1, pixels, sources)?);
    }
    Ok(CandidateSet {
        width: w,
        height: h,
        candidates,
        scales: per_scale.into_iter().map(|(r, _)| r).collect(),
    })
}

#[cfg(test)]
mod tests;
