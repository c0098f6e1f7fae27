//! Linear and rank filters.

use super::GrayImage;
use crate::error::{Error, Result};

/// Maps an out-of-range index onto `0..n` by symmetric reflection
/// (`... c b a | a b c ... | c b a ...`), repeating as often as needed.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian smoothing with reflected borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let src = img.data();

    let mut tmp = vec![0.0; w * h];
    let mut row_buf = vec![0.0; w + 2 * r as usize];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (k, slot) in row_buf.iter_mut().enumerate() {
            *slot = row[reflect_index(k as isize - r, w)];
        }
        let out = &mut tmp[y * w..(y + 1) * w];
        // Symmetric pairs are summed first so the result is bitwise
        // invariant under a horizontal flip.
        let ru = r as usize;
        for (x, o) in out.iter_mut().enumerate() {
            let c = x + ru;
            let mut acc = kernel[ru] * row_buf[c];
            for d in 1..=ru {
                acc += kernel[ru + d] * (row_buf[c - d] + row_buf[c + d]);
            }
            *o = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - r, h);
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += kv * s;
            }
        }
    }
    Ok(GrayImage::from_raw(w, h, out))
}

/// Mean over the `window x window` square centred at each pixel, with the
/// window clamped to the frame (only in-frame pixels are averaged).
///
/// Uses a summed-area table, so the cost does not depend on `window`.
pub fn box_mean(img: &GrayImage, window: usize) -> GrayImage {
    let (w, h) = img.dims();
    let src = img.data();
    let stride = w + 1;
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0;
        for x in 0..w {
            row_sum += src[y * w + x];
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row_sum;
        }
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let y0 = y.saturating_sub(half);
        let y1 = (y + half + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(half);
            let x1 = (x + half + 1).min(w);
            let s = sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0]
                + sat[y0 * stride + x0];
            out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    GrayImage::from_raw(w, h, out)
}

/// Rounds a window length to the nearest odd integer, at least 3.
pub(crate) fn odd_window(len: f64) -> usize {
    let n = len.round().max(3.0) as usize;
    if n.is_multiple_of(2) {
        // nearest odd: ties go up
        if len >= n as f64 { n + 1 } else { n - 1 }.max(3)
    } else {
        n
    }
}

/// Per-pixel median over a `window x window` square with reflected borders.
/// `window` is rounded to the nearest odd value >= 3.
pub fn median_filter(img: &GrayImage, window: usize) -> GrayImage {
    let window = odd_window(window as f64);
    let (w, h) = img.dims();
    let r = (window / 2) as isize;
    let src = img.data();
    let mut buf = Vec::with_capacity(window * window);
    let mid = window * window / 2;
    let cols: Vec<Vec<usize>> = (0..w)
        .map(|x| (-r..=r).map(|d| reflect_index(x as isize + d, w)).collect())
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let rows: Vec<usize> = (-r..=r).map(|d| reflect_index(y as isize + d, h)).collect();
        for col in &cols {
            buf.clear();
            for &sy in &rows {
                let base = sy * w;
                buf.extend(col.iter().map(|&sx| src[base + sx]));
            }
            let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            out.push(*m);
        }
    }
    GrayImage::from_raw(w, h, out)
}
