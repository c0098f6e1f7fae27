//! Deterministic seed derivation.
//!
//! Every stochastic component receives its own stream derived from one
//! master seed, so that adding or reordering components never perturbs the
//! randomness seen by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream identifiers for the pipeline components.
pub mod stream {
    pub const CNN_INIT: u64 = 1;
    pub const CNN_TRAIN: u64 = 2;
    pub const FOREST: u64 = 3;
    pub const SYNTH: u64 = 4;
}

/// SplitMix64 finalizer; a bijection on `u64` with good avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for child `index` of `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, index))
}
