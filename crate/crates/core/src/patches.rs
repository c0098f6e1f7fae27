//! Candidate-centred patches for the convolutional network.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, FundusImage};

pub const PATCH_SIDE: usize = 32;
pub const PATCH_CHANNELS: usize = 3;
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE * PATCH_CHANNELS;

/// A 3x32x32 tensor in channel-major order, holding equalized intensities
/// divided by 255.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub data: Vec<f64>,
    pub candidate_id: u32,
    pub image_id: String,
}

impl Patch {
    pub fn new(data: Vec<f64>, candidate_id: u32, image_id: impl Into<String>) -> Result<Self> {
        if data.len() != PATCH_LEN {
            return Err(Error::invalid(format!("patch needs {PATCH_LEN} values, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("patch values must be finite"));
        }
        Ok(Self {
            data,
            candidate_id,
            image_id: image_id.into(),
        })
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * PATCH_SIDE + y) * PATCH_SIDE + x]
    }

    fn remap(&self, f: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let n = PATCH_SIDE;
        let mut data = vec![0.0; PATCH_LEN];
        for c in 0..PATCH_CHANNELS {
            for y in 0..n {
                for x in 0..n {
                    let (sx, sy) = f(x, y);
                    data[(c * n + y) * n + x] = self.get(c, sx, sy);
                }
            }
        }
        Self {
            data,
            candidate_id: self.candidate_id,
            image_id: self.image_id.clone(),
        }
    }

    /// Rotation by 90 degrees counter-clockwise.
    pub fn rot90(&self) -> Self {
        let n = PATCH_SIDE;
        self.remap(|x, y| (n - 1 - y, x))
    }

    pub fn flip_horizontal(&self) -> Self {
        let n = PATCH_SIDE;
        self.remap(|x, y| (n - 1 - x, y))
    }
}

/// Side of the square window cropped around a candidate.
pub fn window_side(cand: &Candidate) -> usize {
    ((2.0 * cand.major_axis).ceil() as usize).max(PATCH_SIDE)
}

/// Crops a square window of side `max(32, ceil(2 * major axis))` centred on
/// the rounded candidate centroid from the equalized image (0..255 scale)
/// and resizes it bilinearly to 32x32. Coordinates outside the frame are
/// clamped to the border.
pub fn extract_patch(equalized: &FundusImage, cand: &Candidate, image_id: &str) -> Patch {
    let (w, h) = equalized.dims();
    let s = window_side(cand);
    let x0 = cand.centroid.0.round() as isize - (s / 2) as isize;
    let y0 = cand.centroid.1.round() as isize - (s / 2) as isize;
    let at = |plane: &crate::image::GrayImage, wx: isize, wy: isize| {
        let x = (x0 + wx).clamp(0, w as isize - 1) as usize;
        let y = (y0 + wy).clamp(0, h as isize - 1) as usize;
        plane.get(x, y) / 255.0
    };
    let mut data = Vec::with_capacity(PATCH_LEN);
    let scale = s as f64 / PATCH_SIDE as f64;
    for plane in equalized.planes() {
        for py in 0..PATCH_SIDE {
            for px in 0..PATCH_SIDE {
                if s == PATCH_SIDE {
                    data.push(at(plane, px as isize, py as isize));
                    continue;
                }
                // half-pixel centres, sample positions clamped to the window
                let sx = ((px as f64 + 0.5) * scale - 0.5).clamp(0.0, (s - 1) as f64);
                let sy = ((py as f64 + 0.5) * scale - 0.5).clamp(0.0, (s - 1) as f64);
                let (ix, iy) = (sx.floor() as isize, sy.floor() as isize);
                let (fx, fy) = (sx - ix as f64, sy - iy as f64);
                let ix1 = (ix + 1).min(s as isize - 1);
                let iy1 = (iy + 1).min(s as isize - 1);
                let top = (1.0 - fx) * at(plane, ix, iy) + fx * at(plane, ix1, iy);
                let bottom = (1.0 - fx) * at(plane, ix, iy1) + fx * at(plane, ix1, iy1);
                data.push((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    Patch {
        data,
        candidate_id: cand.id,
        image_id: image_id.to_string(),
    }
}

/// 1 when at least one candidate pixel lies on the lesion mask.
pub fn label_candidate(cand: &Candidate, lesions: &BinaryMask) -> u8 {
    u8::from(cand.pixels.iter().any(|&(x, y)| lesions.get(x, y)))
}

/// The eight images of the dihedral orbit: the identity and its mirror,
/// then for each further quarter turn the mirrored and the plain rotation.
pub fn augment_8x(patch: &Patch) -> [Patch; 8] {
    let r1 = patch.rot90();
    let r2 = r1.rot90();
    let r3 = r2.rot90();
    [
        patch.clone(),
        patch.flip_horizontal(),
        r1.flip_horizontal(),
        r1,
        r2.flip_horizontal(),
        r2,
        r3.flip_horizontal(),
        r3,
    ]
}

/// Patches with labels, the mean image that was subtracted from them and the
/// class-balance weight `beta` (fraction of negatives).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatchSet {
    pub patches: Vec<Patch>,
    pub labels: Vec<u8>,
    pub mean_image: Vec<f64>,
    pub beta: f64,
}

impl LabeledPatchSet {
    /// Centres raw patches on their mean image. `beta` overrides the class
    /// balance computed from the labels.
    pub fn new(mut patches: Vec<Patch>, labels: Vec<u8>, beta: Option<f64>) -> Result<Self> {
        if patches.len() != labels.len() {
            return Err(Error::invalid("patches and labels differ in length"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        let beta = match beta {
            Some(b) if b > 0.0 && b < 1.0 => b,
            Some(b) => return Err(Error::invalid(format!("beta must lie in (0, 1), got {b}"))),
            None => class_balance(&labels)?,
        };
        let mean_image = mean_patch(&patches);
        for p in &mut patches {
            for (v, m) in p.data.iter_mut().zip(&mean_image) {
                *v -= m;
            }
        }
        Ok(Self {
            patches,
            labels,
            mean_image,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Patch `i` with the mean image added back.
    pub fn uncentered(&self, i: usize) -> Patch {
        let p = &self.patches[i];
        Patch {
            data: p.data.iter().zip(&self.mean_image).map(|(a, b)| a + b).collect(),
            candidate_id: p.candidate_id,
            image_id: p.image_id.clone(),
        }
    }
}

/// Fraction of negatives; errors when either class is missing.
pub fn class_balance(labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateClassBalance(format!("{pos} positives and {neg} negatives")));
    }
    Ok(neg as f64 / labels.len() as f64)
}

/// One image worth of training material.
pub struct TrainingImage<'a> {
    pub image_id: &'a str,
    /// Color-equalized image on the 0..255 scale.
    pub equalized: &'a FundusImage,
    pub candidates: &'a [Candidate],
    pub lesions: &'a BinaryMask,
}

/// Extracts, labels and augments the patches of every candidate, then
/// subtracts the mean image of the augmented set. `beta` overrides the
/// class balance computed from the labels.
pub fn build_training_set(items: &[TrainingImage<'_>], beta: Option<f64>) -> Result<LabeledPatchSet> {
    let per_image: Vec<Vec<(Patch, u8)>> = items
        .par_iter()
        .map(|it| {
            it.candidates
                .iter()
                .map(|c| (extract_patch(it.equalized, c, it.image_id), label_candidate(c, it.lesions)))
                .collect()
        })
        .collect();
    augmented_set(&per_image.into_iter().flatten().collect::<Vec<_>>(), beta)
}

/// Augments labeled patches eightfold and centres them on the mean of the
/// augmented set.
pub fn augmented_set(base: &[(Patch, u8)], beta: Option<f64>) -> Result<LabeledPatchSet> {
    let mut patches = Vec::with_capacity(base.len() * 8);
    let mut labels = Vec::with_capacity(base.len() * 8);
    for (p, l) in base {
        for a in augment_8x(p) {
            patches.push(a);
            labels.push(*l);
        }
    }
    LabeledPatchSet::new(patches, labels, beta)
}

fn mean_patch(patches: &[Patch]) -> Vec<f64> {
    let mut sum = vec![0.0; PATCH_LEN];
    for p in patches {
        for (s, v) in sum.iter_mut().zip(&p.data) {
            *s += v;
        }
    }
    let n = patches.len().max(1) as f64;
    sum.iter().map(|s| s / n).collect()
}

// Container layout, little-endian:
//   b"RLPS", u32 version, u64 count, u32 side, u32 channels, f64 beta,
//   mean image (f64 x len), tensors (f64 x len each), labels (u8 each),
//   then per patch: u32 candidate id, u32 id length, id bytes.
const MAGIC: &[u8; 4] = b"RLPS";
const VERSION: u32 = 1;

pub fn write_patch_set(set: &LabeledPatchSet, mut out: impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(set.len() as u64).to_le_bytes())?;
    out.write_all(&(PATCH_SIDE as u32).to_le_bytes())?;
    out.write_all(&(PATCH_CHANNELS as u32).to_le_bytes())?;
    out.write_all(&set.beta.to_le_bytes())?;
    let mut buf = Vec::with_capacity(PATCH_LEN * 8);
    for v in &set.mean_image {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    for p in &set.patches {
        buf.clear();
        for v in &p.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.write_all(&set.labels)?;
    for p in &set.patches {
        out.write_all(&p.candidate_id.to_le_bytes())?;
        out.write_all(&(p.image_id.len() as u32).to_le_bytes())?;
        out.write_all(p.image_id.as_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format("patch set", format!("truncated: {e}")))?;
    Ok(b)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::format("patch set", format!("truncated: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_patch_set(mut r: impl Read) -> Result<LabeledPatchSet> {
    if &read_array::<4>(&mut r)? != MAGIC {
        return Err(Error::format("patch set", "bad magic"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::format("patch set", format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let side = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let channels = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if side != PATCH_SIDE || channels != PATCH_CHANNELS {
        return Err(Error::format("patch set", format!("unexpected patch shape {channels}x{side}x{side}")));
    }
    let beta = f64::from_le_bytes(read_array(&mut r)?);
    let mean_image = read_f64s(&mut r, PATCH_LEN)?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        tensors.push(read_f64s(&mut r, PATCH_LEN)?);
    }
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)
        .map_err(|e| Error::format("patch set", format!("truncated: {e}")))?;
    let mut patches = Vec::with_capacity(count);
    for data in tensors {
        let candidate_id = u32::from_le_bytes(read_array(&mut r)?);
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)
            .map_err(|e| Error::format("patch set", format!("truncated: {e}")))?;
        let image_id = String::from_utf8(id).map_err(|_| Error::format("patch set", "image id is not UTF-8"))?;
        patches.push(Patch {
            data,
            candidate_id,
            image_id,
        });
    }
    Ok(LabeledPatchSet {
        patches,
        labels,
        mean_image,
        beta,
    })
}

pub fn save_patch_set(path: impl AsRef<Path>, set: &LabeledPatchSet) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_patch_set(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_patch_set(path: impl AsRef<Path>) -> Result<LabeledPatchSet> {
    let f = std::fs::File::open(path)?;
    read_patch_set(std::io::BufReader::new(f))
}
