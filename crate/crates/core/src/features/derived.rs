//! Derived images the intensity features are measured on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{corrected_green, min_directional_closing, DEFAULT_ANGLES};
use crate::error::{Error, Result};
use crate::image::{clahe, color_equalize, expand_fov, median_filter, reflect_index, ClaheParams, EqualizeParams};
use crate::image::{BinaryMask, FovMask, FundusImage, GrayImage};
use crate::morphology::{close_disk, remove_small_components};
use crate::BASE_FOV_WIDTH;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Line lengths of the small-scale top-hat image, at the reference
    /// resolution.
    pub tophat_lengths: Vec<usize>,
    /// Side of the background median filter as a fraction of the FOV width.
    pub background_window_fraction: f64,
    /// Side of the neighbourhood compared against in the match image.
    pub match_window: usize,
    /// Radius of the ring used by the contrast features, at the reference
    /// resolution (never below 2 pixels).
    pub contrast_radius: f64,
    /// Vessel components smaller than this fraction of the FOV width (in
    /// pixels) are discarded.
    pub vessel_min_fraction: f64,
    pub vessel_closing_radius: usize,
    /// Value of vessel dependent features when no segmentation is given.
    pub vessel_fallback: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            tophat_lengths: (5..=15).step_by(2).collect(),
            background_window_fraction: 25.0 / 536.0,
            match_window: 11,
            contrast_radius: 5.0,
            vessel_min_fraction: 100.0 / 536.0,
            vessel_closing_radius: 2,
            vessel_fallback: 0.0,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if self.tophat_lengths.is_empty() || self.tophat_lengths.contains(&0) {
            return Err(Error::invalid("top-hat lengths must be nonempty and positive"));
        }
        if !(self.background_window_fraction > 0.0) || !(self.vessel_min_fraction >= 0.0) {
            return Err(Error::invalid("window fractions must be positive"));
        }
        if self.match_window < 3 || self.match_window.is_multiple_of(2) {
            return Err(Error::invalid("match window must be odd and at least 3"));
        }
        if !(self.contrast_radius > 0.0) || !self.vessel_fallback.is_finite() {
            return Err(Error::invalid("contrast radius must be positive"));
        }
        Ok(())
    }

    /// Top-hat lengths at a given FOV width: rounded, at least 3, deduplicated.
    pub fn tophat_lengths_at(&self, fov_width: usize) -> Vec<usize> {
        let s = fov_width as f64 / BASE_FOV_WIDTH;
        let mut out: Vec<usize> = self
            .tophat_lengths
            .iter()
            .map(|&l| ((l as f64 * s).round() as usize).max(3))
            .collect();
        out.dedup();
        out
    }

    pub fn contrast_radius_at(&self, fov_width: usize) -> usize {
        ((self.contrast_radius * fov_width as f64 / BASE_FOV_WIDTH).ceil() as usize).max(2)
    }

    pub fn background_window_at(&self, fov_width: usize) -> usize {
        (self.background_window_fraction * fov_width as f64).round().max(3.0) as usize
    }
}

/// Every image a feature is measured on, registered to the source image.
#[derive(Debug, Clone)]
pub struct DerivedImageBundle {
    pub r: GrayImage,
    pub g: GrayImage,
    pub b: GrayImage,
    /// Illumination-corrected green band.
    pub i_w: GrayImage,
    pub r_c: GrayImage,
    pub g_c: GrayImage,
    pub b_c: GrayImage,
    pub i_w_c: GrayImage,
    /// Color-equalized bands, rescaled to `[0, 1]`.
    pub r_ce: GrayImage,
    pub g_ce: GrayImage,
    pub b_ce: GrayImage,
    /// Green band minus its median background.
    pub i_sc: GrayImage,
    pub i_bg: GrayImage,
    /// `i_sc` with the vessels inpainted.
    pub i_lesion: GrayImage,
    pub i_match: GrayImage,
    /// Largest small-scale black top-hat response of `i_w`.
    pub i_cand_small: GrayImage,
    /// Vessel segmentation after post-processing, when one was supplied.
    pub vessels: Option<BinaryMask>,
    pub fov_width: usize,
}

/// Number of images held by a bundle.
pub const BUNDLE_IMAGES: usize = 16;

impl DerivedImageBundle {
    pub fn images(&self) -> [(&'static str, &GrayImage); BUNDLE_IMAGES] {
        [
            ("R", &self.r),
            ("G", &self.g),
            ("B", &self.b),
            ("IW", &self.i_w),
            ("Rc", &self.r_c),
            ("Gc", &self.g_c),
            ("Bc", &self.b_c),
            ("IWc", &self.i_w_c),
            ("Rce", &self.r_ce),
            ("Gce", &self.g_ce),
            ("Bce", &self.b_ce),
            ("ISC", &self.i_sc),
            ("IBG", &self.i_bg),
            ("Ilesion", &self.i_lesion),
            ("Imatch", &self.i_match),
            ("Itophat", &self.i_cand_small),
        ]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.g.dims()
    }

    /// The twelve images shared by the mean, sum, std and contrast rows.
    pub(crate) fn shared(&self) -> [&GrayImage; 12] {
        [
            &self.r, &self.g, &self.b, &self.i_w, &self.r_c, &self.g_c, &self.b_c, &self.i_w_c, &self.r_ce,
            &self.g_ce, &self.b_ce, &self.i_sc,
        ]
    }
}

/// Removes components smaller than `vessel_min_fraction * X` pixels, then
/// closes with a disk to bridge the central reflex of arteries.
pub fn postprocess_vessel_mask(vessels: &BinaryMask, fov_width: usize, params: &FeatureParams) -> BinaryMask {
    let min_size = (params.vessel_min_fraction * fov_width as f64).ceil() as usize;
    let kept = remove_small_components(vessels, min_size);
    close_disk(&kept, params.vessel_closing_radius)
}

/// Fills the masked pixels from the outside in. Each iteration first
/// computes, for every masked pixel with at least one known 8-neighbour,
/// the mean of those neighbours, then commits all of them at once, so the
/// result does not depend on the scan direction.
pub fn inpaint(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    img.check_same_dims(mask.dims())?;
    let (w, h) = img.dims();
    let mut out = img.clone();
    let mut known: Vec<bool> = mask.data().iter().map(|&m| !m).collect();
    if !known.iter().any(|&k| k) {
        return Ok(out);
    }
    let mut pending: Vec<usize> = mask.indices().collect();
    while !pending.is_empty() {
        let mut fills = Vec::new();
        let mut rest = Vec::new();
        for &i in &pending {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let (mut sum, mut n) = (0.0, 0usize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if known[j] {
                        sum += out.data()[j];
                        n += 1;
                    }
                }
            }
            if n > 0 {
                fills.push((i, sum / n as f64));
            } else {
                rest.push(i);
            }
        }
        for &(i, v) in &fills {
            out.data_mut()[i] = v;
            known[i] = true;
        }
        pending = rest;
    }
    Ok(out)
}

/// Each pixel minus the mean of its `window x window` neighbourhood without
/// the centre, with reflected borders.
pub fn match_image(img: &GrayImage, window: usize) -> GrayImage {
    let (w, h) = img.dims();
    let r = (window / 2) as isize;
    let src = img.data();
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = (-r..=r).map(|d| src[y * w + reflect_index(x as isize + d, w)]).sum();
        }
    }
    let count = (window * window) as f64;
    GrayImage::from_fn(w, h, |x, y| {
        let total: f64 = (-r..=r).map(|d| rows[reflect_index(y as isize + d, h) * w + x]).sum();
        let v = src[y * w + x];
        v - (total - v) / (count - 1.0)
    })
}

/// Largest black top-hat response over the given line lengths.
pub fn small_tophat(i_w: &GrayImage, lengths: &[usize]) -> GrayImage {
    let per: Vec<GrayImage> = lengths
        .par_iter()
        .map(|&l| {
            min_directional_closing(i_w, l, &DEFAULT_ANGLES)
                .zip_map(i_w, |c, v| c - v)
                .expect("same dims")
        })
        .collect();
    let mut out = GrayImage::filled(i_w.width(), i_w.height(), 0.0);
    for p in &per {
        for (o, &v) in out.data_mut().iter_mut().zip(p.data()) {
            *o = o.max(v);
        }
    }
    out
}

/// Computes the full bundle. Without a vessel segmentation the lesion image
/// equals `i_sc` and vessel features fall back to a constant.
pub fn derive_images(
    image: &FundusImage,
    fov: &FovMask,
    vessels: Option<&BinaryMask>,
    params: &FeatureParams,
) -> Result<DerivedImageBundle> {
    params.validate()?;
    if image.dims() != fov.dims() {
        return Err(Error::dims(image.dims(), fov.dims()));
    }
    if let Some(v) = vessels {
        if v.dims() != image.dims() {
            return Err(Error::dims(image.dims(), v.dims()));
        }
    }
    let x = fov.fov_width();
    let [r, g, b] = image.planes().clone();
    let i_w = corrected_green(image, fov)?;
    let clahe_params = ClaheParams::default();

    let (enhanced, rest) = rayon::join(
        || -> Result<Vec<GrayImage>> {
            [&r, &g, &b, &i_w].par_iter().map(|p| clahe(p, &clahe_params)).collect()
        },
        || -> Result<(FundusImage, GrayImage, GrayImage)> {
            let ce = color_equalize(image, fov, &EqualizeParams::for_fov_width(x))?;
            let g_exp = expand_fov(&g, fov)?;
            let bg = median_filter(&g_exp, params.background_window_at(x));
            let tophat = small_tophat(&i_w, &params.tophat_lengths_at(x));
            Ok((ce.map_planes(|p| p.map(|v| v / 255.0)), bg, tophat))
        },
    );
    let [r_c, g_c, b_c, i_w_c]: [GrayImage; 4] = enhanced?.try_into().expect("four planes");
    let (ce, i_bg, i_cand_small) = rest?;
    let [r_ce, g_ce, b_ce] = ce.into_planes();

    let i_sc = g.zip_map(&i_bg, |a, b| a - b)?;
    let vessels = vessels.map(|v| postprocess_vessel_mask(v, x, params));
    let i_lesion = match &vessels {
        Some(v) => inpaint(&i_sc, v)?,
        None => {
            log::warn!("no vessel segmentation given; vessel features use the fallback value");
            i_sc.clone()
        }
    };
    let i_match = match_image(&i_lesion, params.match_window);
    Ok(DerivedImageBundle {
        r,
        g,
        b,
        i_w,
        r_c,
        g_c,
        b_c,
        i_w_c,
        r_ce,
        g_ce,
        b_ce,
        i_sc,
        i_bg,
        i_lesion,
        i_match,
        i_cand_small,
        vessels,
        fov_width: x,
    })
}
