//! Region geometry from second-order moments.

use serde::{Deserialize, Serialize};

/// Inclusive bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// Ellipse with the same normalized second central moments as the region
/// (pixels treated as unit squares).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub major_axis: f64,
    pub minor_axis: f64,
    /// Degrees counter-clockwise from the x axis, in `(-90, 90]`.
    pub orientation: f64,
    pub eccentricity: f64,
}

pub fn centroid(pixels: &[(usize, usize)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (sx, sy) = pixels
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
    (sx / n, sy / n)
}

pub fn bounding_box(pixels: &[(usize, usize)]) -> BoundingBox {
    pixels.iter().fold(
        BoundingBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        },
        |b, &(x, y)| BoundingBox {
            x0: b.x0.min(x),
            y0: b.y0.min(y),
            x1: b.x1.max(x),
            y1: b.y1.max(y),
        },
    )
}

pub fn moment_ellipse(pixels: &[(usize, usize)]) -> Ellipse {
    let n = pixels.len() as f64;
    let (cx, cy) = centroid(pixels);
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pixels {
        let dx = x as f64 - cx;
        // y grows downwards in the image; flip it for a conventional angle
        let dy = -(y as f64 - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let uxx = sxx / n + 1.0 / 12.0;
    let uyy = syy / n + 1.0 / 12.0;
    let uxy = sxy / n;
    let common = ((uxx - uyy).powi(2) + 4.0 * uxy * uxy).sqrt();
    let major_axis = 2.0 * std::f64::consts::SQRT_2 * (uxx + uyy + common).sqrt();
    let minor_axis = 2.0 * std::f64::consts::SQRT_2 * (uxx + uyy - common).max(0.0).sqrt();
    let eccentricity = if major_axis > 0.0 {
        (2.0 * ((major_axis / 2.0).powi(2) - (minor_axis / 2.0).powi(2)).max(0.0).sqrt() / major_axis)
            .clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (num, den) = if uyy > uxx {
        (uyy - uxx + common, 2.0 * uxy)
    } else {
        (2.0 * uxy, uxx - uyy + common)
    };
    let orientation = if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num.atan2(den).to_degrees()
    };
    let orientation = if orientation > 90.0 {
        orientation - 180.0
    } else if orientation <= -90.0 {
        orientation + 180.0
    } else {
        orientation
    };
    Ellipse {
        major_axis,
        minor_axis,
        orientation,
        eccentricity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_is_a_small_circle() {
        let e = moment_ellipse(&[(3, 4)]);
        assert!((e.major_axis - e.minor_axis).abs() < 1e-12);
        assert!((e.major_axis - 2.0 / 3.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(e.eccentricity, 0.0);
    }

    #[test]
    fn horizontal_bar() {
        let px: Vec<_> = (0..10).map(|x| (x, 0)).collect();
        let e = moment_ellipse(&px);
        // uxx = (n^2-1)/12 + 1/12 = n^2/12, so the axis is n * 2/sqrt(3)
        assert!((e.major_axis - 20.0 / 3.0f64.sqrt()).abs() < 1e-9);
        assert!(e.orientation.abs() < 1e-9);
        assert!(e.eccentricity > 0.99);
        let b = bounding_box(&px);
        assert_eq!((b.width(), b.height()), (10, 1));
    }

    #[test]
    fn diagonal_orientation_sign() {
        // rising to the right on screen (y decreasing) is +45 degrees
        let px: Vec<_> = (0..8).map(|i| (i, 7 - i)).collect();
        assert!((moment_ellipse(&px).orientation - 45.0).abs() < 1e-9);
        let px: Vec<_> = (0..8).map(|i| (i, i)).collect();
        assert!((moment_ellipse(&px).orientation + 45.0).abs() < 1e-9);
    }
}
