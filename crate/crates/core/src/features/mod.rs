//! Hand-crafted candidate descriptors: 54 intensity statistics over a bundle
//! of derived images and 9 shape measures.

mod derived;
mod hcf;
mod table;

pub use self::derived::{
    derive_images, inpaint, match_image, postprocess_vessel_mask, small_tophat, DerivedImageBundle, FeatureParams,
    BUNDLE_IMAGES,
};
pub use self::hcf::{
    boundary_pixels, hcf_index, hcf_vector, hcf_vectors, intensity_features, shape_features, surround_ring, HcfFlags,
    HcfVector, HCF_DIM, HCF_NAMES, N_CONTRAST, N_INTENSITY, N_MEAN, N_MIN, N_NORM_MEAN, N_NORM_TOTAL, N_SHAPE, N_STD,
    N_SUM,
};
pub use self::table::{FeatureRow, FeatureTable};
