//! Color equalization against a large-scale Gaussian background.

use super::filter::gaussian_blur;
use super::fov::expand_fov;
use super::{FovMask, FundusImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualizeParams {
    pub alpha: f64,
    pub tau: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl EqualizeParams {
    /// `alpha = 4`, `tau = -4`, `gamma = 128`, `sigma = X/30`.
    pub fn for_fov_width(fov_width: usize) -> Self {
        Self {
            alpha: 4.0,
            tau: -4.0,
            gamma: 128.0,
            sigma: (fov_width as f64 / 30.0).max(0.5),
        }
    }
}

/// Per band: `alpha * I + tau * (G_sigma * I) + gamma`, clamped to
/// `[0, 255]`, where `I` is the band on the 0..255 scale after the field of
/// view has been expanded. The output is on the `[0, 255]` scale.
pub fn color_equalize(image: &FundusImage, fov: &FovMask, params: &EqualizeParams) -> Result<FundusImage> {
    if image.dims() != fov.dims() {
        return Err(Error::dims(image.dims(), fov.dims()));
    }
    let mut planes = Vec::with_capacity(3);
    for band in image.planes() {
        let scaled = band.map(|v| 255.0 * v);
        let expanded = expand_fov(&scaled, fov)?;
        let blurred = gaussian_blur(&expanded, params.sigma)?;
        planes.push(expanded.zip_map(&blurred, |v, b| {
            (params.alpha * v + params.tau * b + params.gamma).clamp(0.0, 255.0)
        })?);
    }
    let [r, g, b]: [_; 3] = planes.try_into().expect("three bands");
    FundusImage::new(r, g, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;

    #[test]
    fn constants_map_to_gamma() {
        for &c in &[0.0, 0.13, 0.5, 0.99, 1.0] {
            let img = FundusImage::from_gray(GrayImage::filled(16, 12, c));
            let out = color_equalize(&img, &FovMask::full(16, 12), &EqualizeParams::for_fov_width(16)).unwrap();
            for p in out.planes() {
                assert!(p.data().iter().all(|&v| (v - 128.0).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn smooth_band_is_flattened_for_small_sigma() {
        let g = GrayImage::from_fn(40, 40, |x, y| 0.2 + 0.01 * x as f64 + 0.005 * y as f64);
        let img = FundusImage::from_gray(g);
        let params = EqualizeParams {
            sigma: 0.3,
            ..EqualizeParams::for_fov_width(40)
        };
        let out = color_equalize(&img, &FovMask::full(40, 40), &params).unwrap();
        for p in out.planes() {
            assert!(p.data().iter().all(|&v| (v - 128.0).abs() <= 1.0));
        }
    }

    #[test]
    fn dark_dot_stays_darker_than_its_surround() {
        let g = GrayImage::from_fn(61, 61, |x, y| {
            let d2 = (x as f64 - 30.0).powi(2) + (y as f64 - 30.0).powi(2);
            if d2 <= 4.0 {
                0.3
            } else {
                0.6
            }
        });
        let img = FundusImage::from_gray(g);
        let out = color_equalize(&img, &FovMask::full(61, 61), &EqualizeParams::for_fov_width(61)).unwrap();
        let band = out.green();
        let mut centre = (0.0, 0);
        let mut ring = (0.0, 0);
        for y in 0..61 {
            for x in 0..61 {
                let d2 = (x as f64 - 30.0).powi(2) + (y as f64 - 30.0).powi(2);
                if d2 <= 4.0 {
                    centre = (centre.0 + band.get(x, y), centre.1 + 1);
                } else if (16.0..=36.0).contains(&d2) {
                    ring = (ring.0 + band.get(x, y), ring.1 + 1);
                }
            }
        }
        assert!(centre.0 / (centre.1 as f64) < ring.0 / (ring.1 as f64));
    }
}
