//! Local polynomial illumination correction.

use super::filter::{box_mean, odd_window};
use super::{FovMask, GrayImage};
use crate::error::Result;

const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalterParams {
    /// Side of the square neighbourhood for the local mean; rounded to the
    /// nearest odd value >= 3.
    pub window: usize,
    pub exponent: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl WalterParams {
    /// Defaults for a field of view `fov_width` pixels wide: `W = 25/536 X`,
    /// `r = 2`, output range `[0, 1]`.
    pub fn for_fov_width(fov_width: usize) -> Self {
        Self {
            window: walter_window(fov_width),
            exponent: 2.0,
            u_min: 0.0,
            u_max: 1.0,
        }
    }
}

/// Local-mean window for a field of view of the given width.
pub fn walter_window(fov_width: usize) -> usize {
    odd_window(25.0 / 536.0 * fov_width as f64)
}

/// Maps intensities through a two-branch polynomial anchored at the global
/// extrema of the field of view and the local mean `mu`:
///
/// ```text
/// G <= mu:  u_min + (u_max-u_min)/2 * ((G-min)/(mu-min))^r
/// G >  mu:  u_max - (u_max-u_min)/2 * ((G-max)/(mu-max))^r
/// ```
///
/// `min`/`max` are taken over the field of view; intensities and local means
/// are clamped to that range first. Where `mu` is within `1e-6` of either
/// extremum the output is the midpoint of the range.
pub fn walter_transform(gray: &GrayImage, fov: &FovMask, params: &WalterParams) -> Result<GrayImage> {
    gray.check_same_dims(fov.dims())?;
    let (lo, hi) = gray
        .data()
        .iter()
        .enumerate()
        .filter(|&(i, _)| fov.contains_index(i))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| {
            (lo.min(v), hi.max(v))
        });
    let window = odd_window(params.window as f64);
    let mu = box_mean(gray, window);
    let half = 0.5 * (params.u_max - params.u_min);
    let mid = 0.5 * (params.u_max + params.u_min);
    let r = params.exponent;

    let out = gray
        .data()
        .iter()
        .zip(mu.data())
        .map(|(&g, &m)| {
            let g = g.clamp(lo, hi);
            let m = m.clamp(lo, hi);
            if (m - lo).abs() < DEGENERATE_EPS || (m - hi).abs() < DEGENERATE_EPS {
                mid
            } else if g <= m {
                params.u_min + half * ((g - lo) / (m - lo)).powf(r)
            } else {
                params.u_max - half * ((g - hi) / (m - hi)).abs().powf(r)
            }
        })
        .map(|v| v.clamp(params.u_min, params.u_max))
        .collect();
    Ok(GrayImage::from_raw(gray.width(), gray.height(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(window: usize) -> WalterParams {
        WalterParams {
            window,
            exponent: 2.0,
            u_min: 0.0,
            u_max: 1.0,
        }
    }

    #[test]
    fn window_scales_with_resolution() {
        assert_eq!(walter_window(536), 25);
        assert_eq!(walter_window(1425), 67);
        assert_eq!(walter_window(20), 3);
    }

    #[test]
    fn constant_image_maps_to_midpoint() {
        let g = GrayImage::filled(12, 10, 0.3);
        let out = walter_transform(&g, &FovMask::full(12, 10), &params(5)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn extrema_hit_the_anchors() {
        // smooth ramp with an isolated dark and bright pixel
        let mut g = GrayImage::from_fn(21, 21, |x, _| 0.4 + 0.01 * x as f64);
        g.set(5, 10, 0.05);
        g.set(15, 10, 0.95);
        let out = walter_transform(&g, &FovMask::full(21, 21), &params(7)).unwrap();
        assert_eq!(out.get(5, 10), 0.0);
        assert_eq!(out.get(15, 10), 1.0);
    }

    #[test]
    fn monotone_in_intensity_for_fixed_local_mean() {
        // a window wider than twice the image gives every pixel the same
        // local mean, so the map must preserve intensity order
        let g = GrayImage::from_fn(5, 5, |x, y| ((7 * x + 3 * y) % 25) as f64 / 24.0);
        let out = walter_transform(&g, &FovMask::full(5, 5), &params(11)).unwrap();
        let mut pairs: Vec<(f64, f64)> = g.data().iter().copied().zip(out.data().iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn output_stays_in_range(
            data in proptest::collection::vec(0.0f64..=1.0, 8 * 6),
            window in 3usize..9,
            u_min in -1.0f64..0.5,
            span in 0.1f64..2.0,
        ) {
            let g = GrayImage::new(8, 6, data).unwrap();
            let p = WalterParams { window, exponent: 2.0, u_min, u_max: u_min + span };
            let out = walter_transform(&g, &FovMask::full(8, 6), &p).unwrap();
            for &v in out.data() {
                prop_assert!(v >= p.u_min && v <= p.u_max);
            }
        }
    }
}
