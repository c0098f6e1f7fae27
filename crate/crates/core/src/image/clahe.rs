//! Contrast-limited adaptive histogram equalization.

use super::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    /// Number of tiles along each axis.
    pub tiles: usize,
    /// Normalized clip limit in `[0, 1]`.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles: 8,
            clip_limit: 0.01,
            bins: 256,
        }
    }
}

/// Histogram of one tile before and after clipping.
#[derive(Debug, Clone)]
pub struct TileHistogram {
    pub raw: Vec<usize>,
    /// Clipped at `limit`, before the excess is redistributed.
    pub clipped: Vec<usize>,
    pub limit: usize,
    pub pixels: usize,
}

struct TileGrid {
    xs: Vec<usize>,
    ys: Vec<usize>,
}

impl TileGrid {
    fn new(w: usize, h: usize, tiles: usize) -> Result<Self> {
        if tiles == 0 || tiles > w || tiles > h {
            return Err(Error::invalid(format!(
                "{tiles}x{tiles} tiles do not fit a {w}x{h} image"
            )));
        }
        let split = |n: usize| (0..=tiles).map(|k| (k * n + tiles / 2) / tiles).collect::<Vec<_>>();
        Ok(Self {
            xs: split(w),
            ys: split(h),
        })
    }

    fn centers(bounds: &[usize]) -> Vec<f64> {
        bounds
            .windows(2)
            .map(|b| (b[0] + b[1] - 1) as f64 / 2.0)
            .collect()
    }
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

fn tile_histograms(gray: &GrayImage, params: &ClaheParams) -> Result<(TileGrid, Vec<TileHistogram>)> {
    if params.bins < 2 {
        return Err(Error::invalid("CLAHE needs at least two bins"));
    }
    if !(0.0..=1.0).contains(&params.clip_limit) {
        return Err(Error::invalid(format!(
            "CLAHE clip limit must lie in [0,1], got {}",
            params.clip_limit
        )));
    }
    let (w, h) = gray.dims();
    let grid = TileGrid::new(w, h, params.tiles)?;
    let mut out = Vec::with_capacity(params.tiles * params.tiles);
    for ty in 0..params.tiles {
        for tx in 0..params.tiles {
            let mut raw = vec![0usize; params.bins];
            for y in grid.ys[ty]..grid.ys[ty + 1] {
                for x in grid.xs[tx]..grid.xs[tx + 1] {
                    raw[bin_of(gray.get(x, y), params.bins)] += 1;
                }
            }
            let pixels = (grid.ys[ty + 1] - grid.ys[ty]) * (grid.xs[tx + 1] - grid.xs[tx]);
            let min_limit = pixels.div_ceil(params.bins);
            let limit = min_limit
                + (params.clip_limit * (pixels - min_limit.min(pixels)) as f64).round() as usize;
            let clipped = raw.iter().map(|&c| c.min(limit)).collect();
            out.push(TileHistogram {
                raw,
                clipped,
                limit,
                pixels,
            });
        }
    }
    Ok((grid, out))
}

/// Per-tile histograms, exposed for inspection.
pub fn clahe_tile_histograms(gray: &GrayImage, params: &ClaheParams) -> Result<Vec<TileHistogram>> {
    tile_histograms(gray, params).map(|(_, h)| h)
}

/// Spreads the clipped excess over the bins without exceeding the limit.
fn redistribute(hist: &TileHistogram) -> Vec<usize> {
    let bins = hist.clipped.len();
    let mut h = hist.clipped.clone();
    let mut excess: usize = hist.raw.iter().map(|&c| c.saturating_sub(hist.limit)).sum();
    let avg = excess / bins;
    let upper = hist.limit.saturating_sub(avg);
    for c in h.iter_mut() {
        if *c > upper {
            excess -= hist.limit - *c;
            *c = hist.limit;
        } else {
            *c += avg;
            excess -= avg;
        }
    }
    let mut step_one = false;
    while excess > 0 {
        let before = excess;
        let step = if step_one { 1 } else { (bins / excess).max(1) };
        let mut i = 0;
        while i < bins && excess > 0 {
            if h[i] < hist.limit {
                h[i] += 1;
                excess -= 1;
            }
            i += step;
        }
        if excess == before {
            if step == 1 {
                break;
            }
            step_one = true;
        }
    }
    h
}

/// Tile mappings plus the geometry needed to interpolate between them.
pub(crate) struct ClaheMapping {
    maps: Vec<Vec<f64>>,
    cx: Vec<f64>,
    cy: Vec<f64>,
    tiles: usize,
    bins: usize,
}

impl ClaheMapping {
    pub(crate) fn build(gray: &GrayImage, params: &ClaheParams) -> Result<Self> {
        let (grid, hists) = tile_histograms(gray, params)?;
        let maps = hists
            .iter()
            .map(|t| {
                let h = redistribute(t);
                let mut acc = 0usize;
                h.iter()
                    .map(|&c| {
                        acc += c;
                        (acc as f64 / t.pixels as f64).min(1.0)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            maps,
            cx: TileGrid::centers(&grid.xs),
            cy: TileGrid::centers(&grid.ys),
            tiles: params.tiles,
            bins: params.bins,
        })
    }

    pub(crate) fn tile_map(&self, tx: usize, ty: usize) -> &[f64] {
        &self.maps[ty * self.tiles + tx]
    }

    fn bracket(centers: &[f64], p: f64) -> (usize, usize, f64) {
        let n = centers.len();
        if p <= centers[0] {
            return (0, 0, 0.0);
        }
        if p >= centers[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let i = centers.partition_point(|&c| c <= p) - 1;
        let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
        (i, i + 1, t)
    }

    /// Bilinearly interpolated output for intensity `v` at pixel `(x, y)`.
    pub(crate) fn map_at(&self, x: usize, y: usize, v: f64) -> f64 {
        let b = bin_of(v, self.bins);
        let (x0, x1, tx) = Self::bracket(&self.cx, x as f64);
        let (y0, y1, ty) = Self::bracket(&self.cy, y as f64);
        let m = |i: usize, j: usize| self.tile_map(i, j)[b];
        let top = (1.0 - tx) * m(x0, y0) + tx * m(x1, y0);
        let bottom = (1.0 - tx) * m(x0, y1) + tx * m(x1, y1);
        ((1.0 - ty) * top + ty * bottom).clamp(0.0, 1.0)
    }
}

/// CLAHE with a uniform target distribution and bilinear interpolation
/// between tile mappings. Input and output are on `[0, 1]`.
pub fn clahe(gray: &GrayImage, params: &ClaheParams) -> Result<GrayImage> {
    let mapping = ClaheMapping::build(gray, params)?;
    Ok(GrayImage::from_fn(gray.width(), gray.height(), |x, y| {
        mapping.map_at(x, y, gray.get(x, y))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_stays_constant() {
        let g = GrayImage::filled(40, 32, 0.3);
        let out = clahe(&g, &ClaheParams::default()).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));
    }

    #[test]
    fn too_many_tiles_is_an_error() {
        let g = GrayImage::filled(6, 20, 0.3);
        assert!(clahe(&g, &ClaheParams::default()).is_err());
    }

    #[test]
    fn two_level_image_keeps_order_with_monotone_maps() {
        let g = GrayImage::from_fn(64, 64, |x, _| if x < 32 { 0.25 } else { 0.75 });
        let params = ClaheParams {
            clip_limit: 0.5,
            ..Default::default()
        };
        let mapping = ClaheMapping::build(&g, &params).unwrap();
        for ty in 0..params.tiles {
            for tx in 0..params.tiles {
                let m = mapping.tile_map(tx, ty);
                assert!(m.windows(2).all(|w| w[1] >= w[0]));
            }
        }
        for y in 0..64 {
            for x in 0..64 {
                assert!(mapping.map_at(x, y, 0.75) >= mapping.map_at(x, y, 0.25));
            }
        }
        // next to the edge the brighter level is pushed towards 1
        let out = clahe(&g, &params).unwrap();
        assert!(out.get(31, 10) < out.get(32, 10));
        assert!(out.get(32, 10) > 0.75);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn clipped_histograms_respect_the_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GrayImage::from_fn(64, 48, |x, _| {
            if x < 20 {
                0.5
            } else {
                rng.random::<f64>() * 0.3
            }
        });
        for t in clahe_tile_histograms(&g, &ClaheParams::default()).unwrap() {
            assert!(t.clipped.iter().all(|&c| c <= t.limit));
            assert_eq!(t.raw.iter().sum::<usize>(), t.pixels);
            let red = redistribute(&t);
            assert_eq!(red.iter().sum::<usize>(), t.pixels);
        }
    }
}
