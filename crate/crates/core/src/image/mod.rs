//! Image containers and the image-level preprocessing transforms.
//!
//! Intensities are `f64` and normalized to `[0, 1]` throughout; the only
//! exception is [`equalize::color_equalize`], whose output lives on the
//! `[0, 255]` scale.

mod clahe;
mod equalize;
mod filter;
mod fov;
pub mod io;
mod walter;

pub use self::clahe::{clahe, clahe_tile_histograms, ClaheParams};
pub use self::equalize::{color_equalize, EqualizeParams};
pub use self::filter::{box_mean, gaussian_blur, gaussian_kernel, median_filter, reflect_index};
pub use self::fov::{compute_fov_mask, expand_fov, expand_fov_with_mask, srgb_luminosity};
pub use self::walter::{walter_transform, walter_window, WalterParams};

use crate::error::{Error, Result};

/// Single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "buffer of {} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite intensity at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Constructor for internal buffers already known to be consistent.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &GrayImage, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_dims(other.dims())?;
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.data.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub(crate) fn check_same_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(self.dims(), dims));
        }
        Ok(())
    }
}

/// Three-plane color raster.
#[derive(Debug, Clone, PartialEq)]
pub struct FundusImage {
    planes: [GrayImage; 3],
}

impl FundusImage {
    pub fn new(red: GrayImage, green: GrayImage, blue: GrayImage) -> Result<Self> {
        red.check_same_dims(green.dims())?;
        red.check_same_dims(blue.dims())?;
        Ok(Self {
            planes: [red, green, blue],
        })
    }

    pub fn from_gray(gray: GrayImage) -> Self {
        Self {
            planes: [gray.clone(), gray.clone(), gray],
        }
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn red(&self) -> &GrayImage {
        &self.planes[0]
    }

    pub fn green(&self) -> &GrayImage {
        &self.planes[1]
    }

    pub fn blue(&self) -> &GrayImage {
        &self.planes[2]
    }

    pub fn planes(&self) -> &[GrayImage; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [GrayImage; 3] {
        self.planes
    }

    pub fn map_planes(&self, f: impl Fn(&GrayImage) -> GrayImage) -> Self {
        Self {
            planes: [f(&self.planes[0]), f(&self.planes[1]), f(&self.planes[2])],
        }
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask buffer of {} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_indices(width: usize, height: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::empty(width, height);
        for i in indices {
            mask.data[i] = true;
        }
        mask
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union(&self, other: &BinaryMask) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }
}

/// Field-of-view mask: a single connected region plus its horizontal extent.
#[derive(Debug, Clone, PartialEq)]
pub struct FovMask {
    mask: BinaryMask,
    fov_width: usize,
}

impl FovMask {
    /// Wraps a mask, computing the horizontal extent of its true pixels.
    pub fn new(mask: BinaryMask) -> Result<Self> {
        let w = mask.width();
        let mut lo = usize::MAX;
        let mut hi = 0;
        for i in mask.indices() {
            let x = i % w;
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if lo == usize::MAX {
            return Err(Error::NoFieldOfView);
        }
        Ok(Self {
            mask,
            fov_width: hi - lo + 1,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            mask: BinaryMask::full(width, height),
            fov_width: width,
        }
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// Horizontal extent of the field of view in pixels.
    pub fn fov_width(&self) -> usize {
        self.fov_width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask.get(x, y)
    }

    #[inline]
    pub fn contains_index(&self, i: usize) -> bool {
        self.mask.data()[i]
    }

    /// Ratio between this field of view and the reference resolution.
    pub fn scale_factor(&self) -> f64 {
        self.fov_width as f64 / crate::BASE_FOV_WIDTH
    }
}
