//! Synthetic fundus-like images with known lesions and vessels.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, LoadedImage, ManifestRecord};
use crate::error::{Error, Result};
use crate::image::io::{save_fundus, save_mask};
use crate::image::{BinaryMask, FovMask, FundusImage, GrayImage};
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Side of the square frame.
    pub size: usize,
    /// Inclusive range of the number of lesions per image.
    pub lesions: (usize, usize),
    /// Inclusive range of lesion diameters in pixels.
    pub lesion_diameter: (f64, f64),
    pub vessels: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            size: 256,
            lesions: (2, 8),
            lesion_diameter: (3.0, 8.0),
            vessels: 6,
            noise: 0.006,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lesion_diameter;
        if !(3.0..=30.0).contains(&lo) || !(3.0..=30.0).contains(&hi) || lo > hi {
            return Err(Error::invalid("lesion diameters must lie within [3, 30] pixels"));
        }
        if self.lesions.0 > self.lesions.1 {
            return Err(Error::invalid("lesion count range is empty"));
        }
        if self.size < 64 {
            return Err(Error::invalid("synthetic images must be at least 64 pixels wide"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be nonnegative"));
        }
        Ok(())
    }
}

/// A planted lesion: an ellipse with centre, semi-axes and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedLesion {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

impl PlantedLesion {
    /// Normalized elliptical radius of a point (1 on the boundary).
    fn rho(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image: FundusImage,
    pub fov: BinaryMask,
    pub lesion_mask: BinaryMask,
    pub lesions: Vec<PlantedLesion>,
    pub vessel_mask: BinaryMask,
}

impl SyntheticImage {
    pub fn has_lesions(&self) -> bool {
        !self.lesions.is_empty()
    }
}

/// Renders image `index` of the dataset seeded with `seed`.
pub fn synthesize(seed: u64, index: u64, params: &SynthParams) -> Result<SyntheticImage> {
    params.validate()?;
    let mut rng = rng_for(crate::rng::derive(seed, stream::SYNTH), index);
    let n = params.size;
    let c = (n as f64 - 1.0) / 2.0;
    let radius = 0.46 * n as f64;
    let inside = |x: f64, y: f64| (x - c).powi(2) + (y - c).powi(2) <= radius * radius;
    let fov = BinaryMask::from_fn(n, n, |x, y| inside(x as f64, y as f64));

    // optic disc on the horizontal midline, left or right
    let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let disc = (c + side * 0.55 * radius, c + rng.random_range(-0.05..0.05) * radius);
    let disc_r = 0.16 * radius;

    let (vessel_depth, vessel_mask) = render_vessels(&mut rng, n, disc, radius, c, params.vessels);

    let count = rng.random_range(params.lesions.0..=params.lesions.1);
    let lesions = place_lesions(&mut rng, n, count, params, &vessel_mask, disc, disc_r, c, radius);
    let mut depth = vec![0.0f64; n * n];
    let mut lesion_mask = BinaryMask::empty(n, n);
    for l in &lesions {
        let strength = rng.random_range(0.30..0.45);
        let reach = l.a.max(l.b) * 1.3 + 1.0;
        for y in ((l.cy - reach).floor().max(0.0) as usize)..=((l.cy + reach).ceil() as usize).min(n - 1) {
            for x in ((l.cx - reach).floor().max(0.0) as usize)..=((l.cx + reach).ceil() as usize).min(n - 1) {
                let rho = l.rho(x as f64, y as f64);
                let f = ((1.25 - rho) / 0.5).clamp(0.0, 1.0);
                let i = y * n + x;
                depth[i] = depth[i].max(strength * f);
                if rho <= 1.0 {
                    lesion_mask.data_mut()[i] = true;
                }
            }
        }
    }

    let grad_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let grad = rng.random_range(0.0..0.08);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.005..0.015),
            )
        })
        .collect();
    let noise = Normal::new(0.0, params.noise.max(1e-12)).expect("valid sigma");
    let base = [0.72, 0.40, 0.17];
    let mut planes: [Vec<f64>; 3] = Default::default();
    for p in planes.iter_mut() {
        p.reserve(n * n);
    }
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let (fx, fy) = (x as f64, y as f64);
            let vals = if fov.data()[i] {
                let r2 = ((fx - c).powi(2) + (fy - c).powi(2)) / (radius * radius);
                let mut shade = 1.0 - 0.35 * r2;
                shade *= 1.0 + grad * ((fx - c) * grad_angle.cos() + (fy - c) * grad_angle.sin()) / radius;
                for &(kx, ky, ph, amp) in &waves {
                    let t = std::f64::consts::TAU * (kx * fx + ky * fy) / n as f64 + ph;
                    shade += amp * t.cos();
                }
                let dd = ((fx - disc.0).powi(2) + (fy - disc.1).powi(2)).sqrt() / disc_r;
                let bright = 0.35 * (1.0 - dd * dd).max(0.0);
                let v = vessel_depth[i];
                let d = depth[i];
                [
                    base[0] * shade * (1.0 - 0.12 * v) * (1.0 - 0.5 * d) + 0.5 * bright,
                    base[1] * shade * (1.0 - 0.40 * v) * (1.0 - d) + bright,
                    base[2] * shade * (1.0 - 0.25 * v) * (1.0 - 0.4 * d) + 0.6 * bright,
                ]
            } else {
                [0.02, 0.02, 0.02]
            };
            for (p, v) in planes.iter_mut().zip(vals) {
                let noisy: f64 = v + noise.sample(&mut rng);
                p.push(quantize8(noisy));
            }
        }
    }
    let [r, g, b] = planes;
    Ok(SyntheticImage {
        image: FundusImage::new(GrayImage::new(n, n, r)?, GrayImage::new(n, n, g)?, GrayImage::new(n, n, b)?)?,
        fov,
        lesion_mask,
        lesions,
        vessel_mask,
    })
}

/// Rounds to the 8-bit grid the way a saved PNG is read back.
fn quantize8(v: f64) -> f64 {
    let k = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    (k as f32 / 255.0) as f64
}

fn render_vessels(
    rng: &mut ChaCha8Rng,
    n: usize,
    disc: (f64, f64),
    radius: f64,
    c: f64,
    count: usize,
) -> (Vec<f64>, BinaryMask) {
    let mut depth = vec![0.0f64; n * n];
    let towards_centre = if disc.0 > c { std::f64::consts::PI } else { 0.0 };
    let mut paths = Vec::new();
    for k in 0..count {
        // arcades leave the disc upwards and downwards, bending towards the centre
        let up = k % 2 == 0;
        let spread = rng.random_range(0.3..1.3);
        let mut theta = towards_centre + if up { -spread } else { spread };
        let bend = if up { 1.0 } else { -1.0 } * if disc.0 > c { -1.0 } else { 1.0 };
        let curvature = bend * rng.random_range(0.002..0.008);
        let width0 = rng.random_range(2.2..3.6);
        let (mut x, mut y) = disc;
        let mut pts = Vec::new();
        let max_len = 2.5 * radius;
        let mut len = 0.0;
        while len < max_len && (x - c).powi(2) + (y - c).powi(2) < (radius + 4.0).powi(2) {
            let w = width0 * (1.0 - 0.55 * len / max_len);
            pts.push((x, y, w));
            theta += curvature + rng.random_range(-0.04..0.04);
            x += theta.cos();
            y += theta.sin();
            len += 1.0;
        }
        // one side branch per vessel
        if pts.len() > 40 {
            let at = rng.random_range(pts.len() / 4..pts.len() / 2);
            let (mut bx, mut by, bw) = pts[at];
            let mut bt = theta + if rng.random::<bool>() { 0.7 } else { -0.7 };
            let mut blen = 0.0;
            let bmax = rng.random_range(0.3..0.7) * radius;
            while blen < bmax && (bx - c).powi(2) + (by - c).powi(2) < (radius + 4.0).powi(2) {
                paths.push((bx, by, 0.7 * bw));
                bt += rng.random_range(-0.05..0.05);
                bx += bt.cos();
                by += bt.sin();
                blen += 1.0;
            }
        }
        paths.extend(pts);
    }
    for &(px, py, w) in &paths {
        let sigma = w / 2.0;
        let reach = (2.5 * sigma).ceil() as isize;
        let (ix, iy) = (px.round() as isize, py.round() as isize);
        for y in iy - reach..=iy + reach {
            for x in ix - reach..=ix + reach {
                if x < 0 || y < 0 || x >= n as isize || y >= n as isize {
                    continue;
                }
                let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                let i = y as usize * n + x as usize;
                depth[i] = depth[i].max((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
    }
    let mask = BinaryMask::new(n, n, depth.iter().map(|&v| v > 0.5).collect()).expect("square frame");
    (depth, mask)
}

#[allow(clippy::too_many_arguments)]
fn place_lesions(
    rng: &mut ChaCha8Rng,
    n: usize,
    count: usize,
    params: &SynthParams,
    vessels: &BinaryMask,
    disc: (f64, f64),
    disc_r: f64,
    c: f64,
    radius: f64,
) -> Vec<PlantedLesion> {
    let mut out: Vec<PlantedLesion> = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 10_000 {
        attempts += 1;
        let d = rng.random_range(params.lesion_diameter.0..=params.lesion_diameter.1);
        let elong = rng.random_range(1.0..1.4);
        let a = d / 2.0;
        let b = (a / elong).max(1.2);
        let cx = rng.random_range(0.0..n as f64);
        let cy = rng.random_range(0.0..n as f64);
        if ((cx - c).powi(2) + (cy - c).powi(2)).sqrt() > radius - a - 12.0 {
            continue;
        }
        if ((cx - disc.0).powi(2) + (cy - disc.1).powi(2)).sqrt() < disc_r + a + 10.0 {
            continue;
        }
        if out.iter().any(|o| ((o.cx - cx).powi(2) + (o.cy - cy).powi(2)).sqrt() < o.a + a + 8.0) {
            continue;
        }
        let clear = a + 5.0;
        let near_vessel = (((cy - clear).floor().max(0.0)) as usize..=((cy + clear).ceil() as usize).min(n - 1))
            .any(|y| {
                (((cx - clear).floor().max(0.0)) as usize..=((cx + clear).ceil() as usize).min(n - 1))
                    .any(|x| vessels.get(x, y) && (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= clear * clear)
            });
        if near_vessel {
            continue;
        }
        out.push(PlantedLesion {
            cx,
            cy,
            a,
            b,
            angle: rng.random_range(0.0..std::f64::consts::PI),
        });
    }
    out
}

/// Writes `n` synthetic images with their annotations under `dir` and
/// returns the manifest, also saved as `dir/manifest.toml`. Layout:
/// `images/<id>.png` and `annotations/<id>_{fov,lesions,vessels}.png`.
pub fn generate_synthetic(dir: impl AsRef<Path>, seed: u64, n: usize, params: &SynthParams) -> Result<DatasetManifest> {
    params.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("annotations"))?;
    let records = (0..n)
        .into_par_iter()
        .map(|i| -> Result<ManifestRecord> {
            let s = synthesize(seed, i as u64, params)?;
            let id = format!("synth_{i:04}");
            let image = PathBuf::from("images").join(format!("{id}.png"));
            let ann = |kind: &str| PathBuf::from("annotations").join(format!("{id}_{kind}.png"));
            save_fundus(dir.join(&image), &s.image)?;
            save_mask(dir.join(ann("fov")), &s.fov)?;
            save_mask(dir.join(ann("lesions")), &s.lesion_mask)?;
            save_mask(dir.join(ann("vessels")), &s.vessel_mask)?;
            let (lesions, vessels, fov) = (ann("lesions"), ann("vessels"), ann("fov"));
            Ok(ManifestRecord {
                id,
                image,
                lesion_maps: vec![lesions],
                vessels: Some(vessels),
                fov: Some(fov),
                label: Some(u8::from(s.has_lesions())),
                fov_threshold: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        records,
        root: dir.to_path_buf(),
    };
    manifest.save(dir.join("manifest.toml"))?;
    Ok(manifest)
}

impl SyntheticImage {
    /// The image as the pipeline sees it after loading it from disk.
    pub fn to_loaded(&self, id: impl Into<String>) -> Result<LoadedImage> {
        Ok(LoadedImage {
            id: id.into(),
            image: self.image.clone(),
            fov: FovMask::new(self.fov.clone())?,
            lesion_mask: Some(self.lesion_mask.clone()),
            vessels: Some(self.vessel_mask.clone()),
            label: Some(u8::from(self.has_lesions())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let p = SynthParams::default();
        let a = synthesize(3, 0, &p).unwrap();
        let b = synthesize(3, 0, &p).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.lesion_mask, b.lesion_mask);
        assert!(a.lesions.len() >= p.lesions.0);
        for i in a.lesion_mask.indices() {
            assert!(a.fov.data()[i]);
            assert!(!a.vessel_mask.data()[i]);
        }
    }

    #[test]
    fn zero_lesions_gives_empty_truth() {
        let p = SynthParams {
            lesions: (0, 0),
            ..Default::default()
        };
        let s = synthesize(1, 2, &p).unwrap();
        assert_eq!(s.lesion_mask.count(), 0);
        assert!(!s.has_lesions());
    }

    #[test]
    fn rejects_bad_sizes() {
        let p = SynthParams {
            lesion_diameter: (2.0, 5.0),
            ..Default::default()
        };
        assert!(synthesize(0, 0, &p).is_err());
    }
}
