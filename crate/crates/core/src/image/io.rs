//! Raster file I/O (PNG, JPEG, TIFF in; PNG out).

use std::path::{Path, PathBuf};

use ::image::{ImageBuffer, Luma, Rgb};

use super::{BinaryMask, FovMask, FundusImage, GrayImage};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<::image::DynamicImage> {
    ::image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn save_err(path: &Path, source: ::image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_fundus(path: impl AsRef<Path>) -> Result<FundusImage> {
    let rgb = open(path.as_ref())?.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut planes = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in rgb.pixels() {
        for (plane, &v) in planes.iter_mut().zip(px.0.iter()) {
            plane.push((v as f64).clamp(0.0, 1.0));
        }
    }
    let [r, g, b] = planes;
    FundusImage::new(
        GrayImage::new(w, h, r)?,
        GrayImage::new(w, h, g)?,
        GrayImage::new(w, h, b)?,
    )
}

/// Single-channel image on `[0, 1]` (8- or 16-bit sources).
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let luma = open(path.as_ref())?.to_luma16();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    GrayImage::new(w, h, luma.pixels().map(|p| p.0[0] as f64 / 65535.0).collect())
}

/// Binary mask: any pixel above half intensity is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let luma = open(path.as_ref())?.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    BinaryMask::new(w, h, luma.pixels().map(|p| p.0[0] > 127).collect())
}

pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let (w, h) = mask.dims();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        w as u32,
        h as u32,
        mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    )
    .expect("buffer size matches");
    buf.save(path.as_ref()).map_err(|e| save_err(path.as_ref(), e))
}

pub fn save_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let (w, h) = img.dims();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        w as u32,
        h as u32,
        img.data().iter().map(|&v| to_u8(v)).collect(),
    )
    .expect("buffer size matches");
    buf.save(path.as_ref()).map_err(|e| save_err(path.as_ref(), e))
}

pub fn save_fundus(path: impl AsRef<Path>, img: &FundusImage) -> Result<()> {
    let (w, h) = img.dims();
    let [r, g, b] = img.planes();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([to_u8(r.get(x, y)), to_u8(g.get(x, y)), to_u8(b.get(x, y))])
    });
    buf.save(path.as_ref()).map_err(|e| save_err(path.as_ref(), e))
}

/// 16-bit label map: 0 is background, `k` marks the pixels of item `k`.
pub fn save_label_map(path: impl AsRef<Path>, width: usize, height: usize, labels: &[u16]) -> Result<()> {
    if labels.len() != width * height {
        return Err(Error::dims((width, height), (labels.len(), 1)));
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, labels.to_vec()).expect("buffer size matches");
    buf.save(path.as_ref()).map_err(|e| save_err(path.as_ref(), e))
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let luma = open(path.as_ref())?.to_luma16();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    Ok((w, h, luma.into_raw()))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Location of the cached field-of-view mask for an image:
/// `<dir>/<stem>_fov.png`.
pub fn fov_cache_path(image_path: &Path) -> PathBuf {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image_path.with_file_name(format!("{stem}_fov.png"))
}

/// Loads the cached mask beside the image if present, otherwise computes it
/// and writes the cache.
pub fn load_or_compute_fov(image_path: &Path, image: &FundusImage, threshold: f64) -> Result<FovMask> {
    let cache = fov_cache_path(image_path);
    if cache.exists() {
        let mask = load_mask(&cache)?;
        if mask.dims() == image.dims() {
            return FovMask::new(mask);
        }
        log::warn!("ignoring {}: size does not match the image", cache.display());
    }
    let fov = super::compute_fov_mask(image, threshold)?;
    save_mask(&cache, fov.mask())?;
    Ok(fov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_and_label_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = BinaryMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        let p = dir.path().join("m.png");
        save_mask(&p, &mask).unwrap();
        assert_eq!(load_mask(&p).unwrap(), mask);

        let labels: Vec<u16> = (0..35).map(|i| (i * 1000) as u16).collect();
        let p = dir.path().join("l.png");
        save_label_map(&p, 7, 5, &labels).unwrap();
        assert_eq!(load_label_map(&p).unwrap(), (7, 5, labels));
    }

    #[test]
    fn cache_path_sits_beside_the_image() {
        assert_eq!(
            fov_cache_path(Path::new("/data/img01.jpg")),
            PathBuf::from("/data/img01_fov.png")
        );
    }
}
