//! Dataset manifests: which images to use and where their annotations live.
//!
//! A manifest is a TOML file with one `[[record]]` table per image:
//!
//! ```toml
//! [[record]]
//! id = "image001"
//! image = "images/image001.png"
//! lesion_maps = ["gt/image001_ma.png", "gt/image001_he.png"]
//! vessels = "vessels/image001.png"
//! label = 1
//! fov_threshold = 0.26
//! ```
//!
//! Relative paths are resolved against the manifest's directory. Lesion
//! maps are gray-level expert-agreement maps on `[0, 1]`; each one is
//! thresholded and the results are merged. Every field but `id` and `image`
//! is optional; `fov` names a precomputed field-of-view mask.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::EvalConfig;
use crate::error::{Error, Result};
use crate::eval::{threshold_consensus, Agreement, GroundTruthLesions};
use crate::image::io::{load_fundus, load_gray, load_mask};
use crate::image::{compute_fov_mask, BinaryMask, FovMask, FundusImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lesion_maps: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vessels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<PathBuf>,
    /// Image-level label (1 = lesions present). Derived from the lesion
    /// maps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default, rename = "record")]
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn from_toml(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))?;
        m.root = root.into();
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, root).map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Checks that ids are unique, labels are binary and every referenced
    /// file exists.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            let fail = |msg: String| Error::invalid(msg).in_record(&r.id);
            if r.id.is_empty() || !seen.insert(r.id.as_str()) {
                return Err(fail("ids must be nonempty and unique".into()));
            }
            if r.label.is_some_and(|l| l > 1) {
                return Err(fail("label must be 0 or 1".into()));
            }
            if r.fov_threshold.is_some_and(|t| !(t > 0.0 && t < 1.0)) {
                return Err(fail("fov_threshold must lie in (0, 1)".into()));
            }
            let files = std::iter::once(&r.image).chain(&r.lesion_maps).chain(&r.vessels).chain(&r.fov);
            for f in files {
                let p = self.resolve(f);
                if !p.is_file() {
                    return Err(fail(format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// One image with whatever annotations the manifest provides.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub id: String,
    pub image: FundusImage,
    pub fov: FovMask,
    /// Union of the thresholded lesion maps; absent when the record has none.
    pub lesion_mask: Option<BinaryMask>,
    pub vessels: Option<BinaryMask>,
    pub label: Option<u8>,
}

impl LoadedImage {
    /// Whether candidates of this image can be labeled for training.
    pub fn is_supervised(&self) -> bool {
        self.lesion_mask.is_some()
    }

    pub fn ground_truth(&self) -> Option<GroundTruthLesions> {
        self.lesion_mask.as_ref().map(GroundTruthLesions::from_mask)
    }
}

/// A validated manifest together with the rules for reading it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub agreement: Agreement,
    pub fov_threshold: f64,
}

/// Opens and validates a manifest. Images are read on demand by
/// [`Dataset::load`].
pub fn load_dataset(path: impl AsRef<Path>, eval: &EvalConfig, fov_threshold: f64) -> Result<Dataset> {
    let manifest = DatasetManifest::load(path)?;
    Dataset::new(manifest, eval, fov_threshold)
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, eval: &EvalConfig, fov_threshold: f64) -> Result<Self> {
        manifest.validate()?;
        if manifest.records.is_empty() {
            log::warn!("the dataset has no records");
        }
        Ok(Self {
            manifest,
            agreement: eval.agreement(),
            fov_threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.manifest.records.iter().map(|r| r.id.as_str())
    }

    /// Reads record `i`. Errors name the record.
    pub fn load(&self, i: usize) -> Result<LoadedImage> {
        let r = &self.manifest.records[i];
        self.load_record(r).map_err(|e| e.in_record(&r.id))
    }

    fn load_record(&self, r: &ManifestRecord) -> Result<LoadedImage> {
        let image = load_fundus(self.manifest.resolve(&r.image))?;
        let dims = image.dims();
        let fov = match &r.fov {
            Some(p) => {
                let m = load_mask(self.manifest.resolve(p))?;
                if m.dims() != dims {
                    return Err(Error::dims(dims, m.dims()));
                }
                FovMask::new(m)?
            }
            None => compute_fov_mask(&image, r.fov_threshold.unwrap_or(self.fov_threshold))?,
        };
        let mut lesion_mask: Option<BinaryMask> = None;
        for p in &r.lesion_maps {
            let map = load_gray(self.manifest.resolve(p))?;
            if map.dims() != dims {
                return Err(Error::dims(dims, map.dims()));
            }
            let m = threshold_consensus(&map, self.agreement);
            lesion_mask = Some(match lesion_mask {
                Some(acc) => acc.union(&m)?,
                None => m,
            });
        }
        let vessels = match &r.vessels {
            Some(p) => {
                let m = load_mask(self.manifest.resolve(p))?;
                if m.dims() != dims {
                    return Err(Error::dims(dims, m.dims()));
                }
                Some(m)
            }
            None => None,
        };
        let label = r
            .label
            .or_else(|| lesion_mask.as_ref().map(|m| u8::from(m.count() > 0)));
        Ok(LoadedImage {
            id: r.id.clone(),
            image,
            fov,
            lesion_mask,
            vessels,
            label,
        })
    }
}
