//! Grey-level closings with digital line structuring elements.

use crate::image::GrayImage;

/// Orientations used for the directional closings: 0 to 165 degrees in
/// 15 degree steps (180 coincides with 0).
pub const DEFAULT_ANGLES: [f64; 12] = [
    0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0, 105.0, 120.0, 135.0, 150.0, 165.0,
];

/// Offsets `(dx, dy)` of a centred digital line of Euclidean length
/// `length` at `angle_deg` (counter-clockwise, image y axis pointing down).
///
/// One half is a Bresenham segment from the origin to the rounded endpoint;
/// the other half is its point reflection, so the element is symmetric.
pub fn line_offsets(length: usize, angle_deg: f64) -> Vec<(isize, isize)> {
    let half = (length.max(1) as f64 - 1.0) / 2.0;
    let theta = angle_deg.to_radians();
    let ex = (half * theta.cos()).round() as isize;
    let ey = (-half * theta.sin()).round() as isize;
    let half_line = bresenham(ex, ey);
    let mut out: Vec<(isize, isize)> = half_line
        .iter()
        .rev()
        .filter(|&&p| p != (0, 0))
        .map(|&(x, y)| (-x, -y))
        .collect();
    out.extend(half_line);
    out
}

fn bresenham(ex: isize, ey: isize) -> Vec<(isize, isize)> {
    let dx = ex.abs();
    let dy = -ey.abs();
    let sx = ex.signum();
    let sy = ey.signum();
    let mut err = dx + dy;
    let (mut x, mut y) = (0isize, 0isize);
    let mut pts = vec![(0, 0)];
    while (x, y) != (ex, ey) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        pts.push((x, y));
    }
    pts
}

/// Flat grey-level dilation (`max`) or erosion (`min`) over a symmetric
/// element; out-of-frame positions are ignored.
fn rank_pass(img: &GrayImage, offsets: &[(isize, isize)], take_max: bool) -> GrayImage {
    let (w, h) = img.dims();
    let src = img.data();
    let mut out = src.to_vec();
    for &(dx, dy) in offsets {
        if dx == 0 && dy == 0 {
            continue;
        }
        let y0 = (-dy).max(0) as usize;
        let y1 = (h as isize - dy.max(0)).max(0) as usize;
        let x0 = (-dx).max(0) as usize;
        let x1 = (w as isize - dx.max(0)).max(0) as usize;
        if x0 >= x1 {
            continue;
        }
        for y in y0..y1 {
            let sy = (y as isize + dy) as usize;
            let sx0 = (x0 as isize + dx) as usize;
            let dst = &mut out[y * w + x0..y * w + x1];
            let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
            if take_max {
                for (d, &v) in dst.iter_mut().zip(s) {
                    *d = d.max(v);
                }
            } else {
                for (d, &v) in dst.iter_mut().zip(s) {
                    *d = d.min(v);
                }
            }
        }
    }
    GrayImage::from_raw(w, h, out)
}

pub fn dilate_gray(img: &GrayImage, offsets: &[(isize, isize)]) -> GrayImage {
    rank_pass(img, offsets, true)
}

pub fn erode_gray(img: &GrayImage, offsets: &[(isize, isize)]) -> GrayImage {
    rank_pass(img, offsets, false)
}

/// Closing (dilation then erosion) with a line of the given length and angle.
pub fn directional_closing(img: &GrayImage, length: usize, angle_deg: f64) -> GrayImage {
    let se = line_offsets(length, angle_deg);
    erode_gray(&dilate_gray(img, &se), &se)
}

/// Pointwise minimum over `angles` of the line closings of length `length`.
///
/// Dark structures that no line of this length fits inside are filled in,
/// while elongated ones (vessels) survive along at least one orientation.
pub fn min_directional_closing(img: &GrayImage, length: usize, angles: &[f64]) -> GrayImage {
    let mut acc: Option<GrayImage> = None;
    for &a in angles {
        let closed = directional_closing(img, length, a);
        acc = Some(match acc {
            None => closed,
            Some(mut m) => {
                for (d, &v) in m.data_mut().iter_mut().zip(closed.data()) {
                    *d = d.min(v);
                }
                m
            }
        });
    }
    acc.unwrap_or_else(|| img.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn lines_are_symmetric_and_connected() {
        for len in 1..25 {
            for &a in &DEFAULT_ANGLES {
                let se = line_offsets(len, a);
                let set: HashSet<_> = se.iter().copied().collect();
                assert_eq!(set.len(), se.len());
                assert!(set.contains(&(0, 0)));
                for &(x, y) in &se {
                    assert!(set.contains(&(-x, -y)));
                }
                for w in se.windows(2) {
                    assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn axis_aligned_lengths() {
        assert_eq!(line_offsets(9, 0.0).len(), 9);
        assert_eq!(line_offsets(9, 90.0).len(), 9);
        assert!(line_offsets(9, 90.0).iter().all(|&(x, _)| x == 0));
        assert_eq!(line_offsets(1, 30.0), vec![(0, 0)]);
    }

    #[test]
    fn constant_image_is_fixed() {
        let img = GrayImage::filled(15, 11, 0.6);
        assert_eq!(min_directional_closing(&img, 7, &DEFAULT_ANGLES), img);
    }
}
