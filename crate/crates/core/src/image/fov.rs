//! Field-of-view estimation and aperture expansion.

use super::filter::reflect_index;
use super::{BinaryMask, FovMask, FundusImage, GrayImage};
use crate::error::{Error, Result};
use crate::morphology::largest_component;

/// RGB-sum threshold (on the 0..255 scale per band) used when the
/// luminosity pass marks the whole frame as foreground.
const RGB_SUM_FALLBACK: f64 = 150.0;
const FOV_MEDIAN_WINDOW: usize = 5;

/// CIELab lightness of an sRGB pixel, scaled to `[0, 1]`.
pub fn srgb_luminosity(r: f64, g: f64, b: f64) -> f64 {
    fn linear(c: f64) -> f64 {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let y = 0.212_672_9 * linear(r) + 0.715_152_2 * linear(g) + 0.072_175_0 * linear(b);
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    let l = if y > EPS { 116.0 * y.cbrt() - 16.0 } else { KAPPA * y };
    (l / 100.0).clamp(0.0, 1.0)
}

/// Estimates the field-of-view mask of a fundus photograph.
///
/// The CIELab lightness plane is thresholded; if that marks every pixel as
/// foreground the sum of the RGB bands is thresholded at 150 instead. The
/// result is smoothed with a 5x5 binary median and reduced to its largest
/// 8-connected component.
pub fn compute_fov_mask(image: &FundusImage, luminosity_threshold: f64) -> Result<FovMask> {
    let (w, h) = image.dims();
    if w == 0 || h == 0 {
        return Err(Error::invalid("empty image"));
    }
    if !(luminosity_threshold > 0.0 && luminosity_threshold < 1.0) {
        return Err(Error::invalid(format!(
            "luminosity threshold must lie in (0,1), got {luminosity_threshold}"
        )));
    }
    let [r, g, b] = image.planes();
    let mut fg = BinaryMask::from_fn(w, h, |x, y| {
        srgb_luminosity(r.get(x, y), g.get(x, y), b.get(x, y)) > luminosity_threshold
    });
    if fg.is_all() {
        log::debug!("luminosity threshold selects the whole frame; using the RGB-sum fallback");
        fg = BinaryMask::from_fn(w, h, |x, y| {
            255.0 * (r.get(x, y) + g.get(x, y) + b.get(x, y)) > RGB_SUM_FALLBACK
        });
    }
    let smoothed = binary_median(&fg, FOV_MEDIAN_WINDOW);
    let largest = largest_component(&smoothed);
    if largest.count() == 0 {
        return Err(Error::NoFieldOfView);
    }
    FovMask::new(largest)
}

/// Majority vote over a square window with reflected borders.
fn binary_median(mask: &BinaryMask, window: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let r = (window / 2) as isize;
    let need = window * window / 2 + 1;
    BinaryMask::from_fn(w, h, |x, y| {
        let mut n = 0;
        for dy in -r..=r {
            let sy = reflect_index(y as isize + dy, h);
            for dx in -r..=r {
                let sx = reflect_index(x as isize + dx, w);
                n += mask.get(sx, sy) as usize;
            }
        }
        n >= need
    })
}

/// Number of pixels the aperture is widened by: `ceil(3/30 * X)`.
pub(crate) fn expansion_band(fov: &FovMask) -> usize {
    (3.0 / 30.0 * fov.fov_width() as f64).ceil() as usize
}

/// Simulates a wider aperture around the field of view.
///
/// Pixels just outside the current region are repeatedly assigned the mean
/// of their 8-neighbours that already belong to it, and then join it; this
/// is repeated `ceil(3/30 * X)` times. In-FOV pixels are never modified.
pub fn expand_fov(gray: &GrayImage, fov: &FovMask) -> Result<GrayImage> {
    expand_fov_with_mask(gray, fov).map(|(img, _)| img)
}

/// As [`expand_fov`], also returning the widened region.
pub fn expand_fov_with_mask(gray: &GrayImage, fov: &FovMask) -> Result<(GrayImage, BinaryMask)> {
    gray.check_same_dims(fov.dims())?;
    let (w, h) = gray.dims();
    let mut out = gray.clone();
    let mut inside = fov.mask().clone();
    let band = expansion_band(fov);

    let neighbours = |i: usize| {
        let x = (i % w) as isize;
        let y = (i / w) as isize;
        (-1isize..=1)
            .flat_map(move |dy| (-1isize..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
                    .then(|| ny as usize * w + nx as usize)
            })
    };

    let mut queued = vec![false; w * h];
    let mut frontier: Vec<usize> = Vec::new();
    for i in 0..w * h {
        if !inside.data()[i] && neighbours(i).any(|n| inside.data()[n]) {
            queued[i] = true;
            frontier.push(i);
        }
    }

    let mut values = Vec::new();
    for _ in 0..band {
        if frontier.is_empty() {
            break;
        }
        values.clear();
        for &i in &frontier {
            let (sum, n) = neighbours(i)
                .filter(|&n| inside.data()[n])
                .fold((0.0, 0usize), |(s, c), n| (s + out.data()[n], c + 1));
            values.push(sum / n as f64);
        }
        for (&i, &v) in frontier.iter().zip(&values) {
            out.data_mut()[i] = v;
            inside.data_mut()[i] = true;
        }
        let mut next = Vec::new();
        for &i in &frontier {
            for n in neighbours(i) {
                if !inside.data()[n] && !queued[n] {
                    queued[n] = true;
                    next.push(n);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }
    Ok((out, inside))
}
