//! The 63 hand-crafted descriptors of a candidate.

use rayon::prelude::*;

use super::derived::{DerivedImageBundle, FeatureParams};
use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::morphology::disk_offsets;

pub const N_MEAN: usize = 13;
pub const N_SUM: usize = 12;
pub const N_STD: usize = 12;
pub const N_CONTRAST: usize = 12;
pub const N_NORM_TOTAL: usize = 3;
pub const N_NORM_MEAN: usize = 1;
pub const N_MIN: usize = 1;
pub const N_INTENSITY: usize = N_MEAN + N_SUM + N_STD + N_CONTRAST + N_NORM_TOTAL + N_NORM_MEAN + N_MIN;
pub const N_SHAPE: usize = 9;
pub const HCF_DIM: usize = N_INTENSITY + N_SHAPE;

const _: () = assert!(N_INTENSITY == 54);
const _: () = assert!(HCF_DIM == 63);

/// Column order of every hand-crafted feature table. Never reorder: stored
/// models index features by position.
pub const HCF_NAMES: [&str; HCF_DIM] = [
    "m_R", "m_G", "m_B", "m_IW", "m_Rc", "m_Gc", "m_Bc", "m_IWc", "m_Rce", "m_Gce", "m_Bce", "m_ISC", "m_Itophat",
    "sum_R", "sum_G", "sum_B", "sum_IW", "sum_Rc", "sum_Gc", "sum_Bc", "sum_IWc", "sum_Rce", "sum_Gce", "sum_Bce", "sum_ISC",
    "sd_R", "sd_G", "sd_B", "sd_IW", "sd_Rc", "sd_Gc", "sd_Bc", "sd_IWc", "sd_Rce", "sd_Gce", "sd_Bce", "sd_ISC",
    "con_R", "con_G", "con_B", "con_IW", "con_Rc", "con_Gc", "con_Bc", "con_IWc", "con_Rce", "con_Gce", "con_Bce", "con_ISC",
    "ntot_G", "ntot_ISC", "ntot_IW",
    "nmean_IW",
    "min_Imatch",
    "area", "perimeter", "aspect_ratio", "circularity", "compactness", "major_axis", "minor_axis", "eccentricity",
    "vessel_ratio",
];

/// Position of a named feature in [`HCF_NAMES`].
pub fn hcf_index(name: &str) -> Option<usize> {
    HCF_NAMES.iter().position(|&n| n == name)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HcfFlags {
    /// The candidate has zero spread in the background image, so the
    /// normalized intensities were set to 0.
    pub background_flat: bool,
    /// No vessel segmentation was available.
    pub vessels_missing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcfVector {
    pub values: [f64; HCF_DIM],
    pub flags: HcfFlags,
}

impl HcfVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        hcf_index(name).map(|i| self.values[i])
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (sum, mean, var.sqrt())
}

fn check_pixels(cand: &Candidate, (w, h): (usize, usize)) -> Result<()> {
    if cand.pixels.is_empty() {
        return Err(Error::invalid(format!("candidate {} has no pixels", cand.id)));
    }
    if cand.pixels.iter().any(|&(x, y)| x >= w || y >= h) {
        return Err(Error::invalid(format!("candidate {} leaves the {w}x{h} frame", cand.id)));
    }
    Ok(())
}

/// Pixels within `radius` of the candidate but outside it, clipped to the
/// frame.
pub fn surround_ring(cand: &Candidate, width: usize, height: usize, radius: usize) -> Vec<usize> {
    let r = radius as isize;
    let x0 = cand.bbox.x0 as isize - r;
    let y0 = cand.bbox.y0 as isize - r;
    let bw = cand.bbox.width() + 2 * radius;
    let bh = cand.bbox.height() + 2 * radius;
    let mut local = vec![0u8; bw * bh];
    let to_local = |x: isize, y: isize| (y - y0) as usize * bw + (x - x0) as usize;
    for &(x, y) in &cand.pixels {
        local[to_local(x as isize, y as isize)] = 2;
    }
    let disk = disk_offsets(radius);
    for &(x, y) in &cand.pixels {
        for &(dx, dy) in &disk {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                continue;
            }
            let k = to_local(nx, ny);
            if local[k] == 0 {
                local[k] = 1;
            }
        }
    }
    let mut ring = Vec::new();
    for ly in 0..bh {
        for lx in 0..bw {
            if local[ly * bw + lx] == 1 {
                ring.push((ly as isize + y0) as usize * width + (lx as isize + x0) as usize);
            }
        }
    }
    ring
}

/// The 54 intensity descriptors, and whether the background normalization
/// fell back to zero.
pub fn intensity_features(cand: &Candidate, bundle: &DerivedImageBundle, params: &FeatureParams) -> Result<([f64; N_INTENSITY], bool)> {
    let (w, h) = bundle.dims();
    check_pixels(cand, (w, h))?;
    let idx: Vec<usize> = cand.indices(w).collect();
    let ring = surround_ring(cand, w, h, params.contrast_radius_at(bundle.fov_width));
    let at = |img: &GrayImage, ix: &[usize]| -> (f64, f64, f64) {
        let d = img.data();
        mean_std(ix.iter().map(move |&i| d[i]))
    };

    let mut out = [0.0; N_INTENSITY];
    let shared = bundle.shared();
    for (k, img) in shared.iter().enumerate() {
        let (sum, mean, sd) = at(img, &idx);
        out[k] = mean;
        out[N_MEAN + k] = sum;
        out[N_MEAN + N_SUM + k] = sd;
        let ring_mean = if ring.is_empty() { mean } else { at(img, &ring).1 };
        out[N_MEAN + N_SUM + N_STD + k] = mean - ring_mean;
    }
    out[12] = at(&bundle.i_cand_small, &idx).1;

    let base = N_MEAN + N_SUM + N_STD + N_CONTRAST;
    let (_, bg_mean, bg_sd) = at(&bundle.i_bg, &idx);
    let flat = !(bg_sd > 0.0);
    if !flat {
        for (k, img) in [&bundle.g, &bundle.i_sc, &bundle.i_w].into_iter().enumerate() {
            out[base + k] = (at(img, &idx).0 - bg_mean) / bg_sd;
        }
        out[base + 3] = (at(&bundle.i_w, &idx).1 - bg_mean) / bg_sd;
    }
    let m = bundle.i_match.data();
    out[base + 4] = idx.iter().map(|&i| m[i]).fold(f64::INFINITY, f64::min);
    Ok((out, flat))
}

/// Candidate pixels with at least one 8-neighbour outside the candidate
/// (out-of-frame neighbours count as outside).
pub fn boundary_pixels(cand: &Candidate) -> Vec<(usize, usize)> {
    let b = &cand.bbox;
    let (bw, bh) = (b.width() + 2, b.height() + 2);
    let mut local = vec![false; bw * bh];
    for &(x, y) in &cand.pixels {
        local[(y - b.y0 + 1) * bw + (x - b.x0 + 1)] = true;
    }
    cand.pixels
        .iter()
        .copied()
        .filter(|&(x, y)| {
            let (lx, ly) = (x - b.x0 + 1, y - b.y0 + 1);
            (0..3).any(|dy| (0..3).any(|dx| !local[(ly + dy - 1) * bw + (lx + dx - 1)]))
        })
        .collect()
}

/// Area, perimeter, aspect ratio, circularity, compactness, major and
/// minor axis, eccentricity and vessel overlap, in that order.
pub fn shape_features(cand: &Candidate, vessels: Option<&BinaryMask>, fallback: f64) -> [f64; N_SHAPE] {
    let area = cand.pixels.len() as f64;
    let boundary = boundary_pixels(cand);
    let perimeter = boundary.len() as f64;
    let (cx, cy) = cand.centroid;
    let dists = boundary.iter().map(|&(x, y)| (x as f64 - cx).hypot(y as f64 - cy));
    let (_, _, compactness) = mean_std(dists);
    let vessel_ratio = match vessels {
        Some(v) => cand.pixels.iter().filter(|&&(x, y)| v.get(x, y)).count() as f64 / area,
        None => fallback,
    };
    [
        area,
        perimeter,
        cand.major_axis / cand.minor_axis,
        4.0 * std::f64::consts::PI * area / (perimeter * perimeter),
        compactness,
        cand.major_axis,
        cand.minor_axis,
        cand.eccentricity,
        vessel_ratio,
    ]
}

pub fn hcf_vector(cand: &Candidate, bundle: &DerivedImageBundle, params: &FeatureParams) -> Result<HcfVector> {
    let (intensity, flat) = intensity_features(cand, bundle, params)?;
    let shape = shape_features(cand, bundle.vessels.as_ref(), params.vessel_fallback);
    let mut values = [0.0; HCF_DIM];
    values[..N_INTENSITY].copy_from_slice(&intensity);
    values[N_INTENSITY..].copy_from_slice(&shape);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("feature {} of candidate {} is not finite", HCF_NAMES[i], cand.id)));
    }
    Ok(HcfVector {
        values,
        flags: HcfFlags {
            background_flat: flat,
            vessels_missing: bundle.vessels.is_none(),
        },
    })
}

/// Feature vectors of many candidates of one image, in input order.
pub fn hcf_vectors(cands: &[Candidate], bundle: &DerivedImageBundle, params: &FeatureParams) -> Result<Vec<HcfVector>> {
    cands.par_iter().map(|c| hcf_vector(c, bundle, params)).collect()
}
