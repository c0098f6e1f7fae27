//! Shared inputs for the kernel benchmarks.

use redlesion_core::candidates::{detect_candidates, CandidateParams, CandidateSet};
use redlesion_core::image::{BinaryMask, FovMask, FundusImage};
use redlesion_core::pipeline::{synthesize, SynthParams};

/// One synthetic fundus image with its masks and detected candidates.
pub struct Fixture {
    pub image: FundusImage,
    pub fov: FovMask,
    pub vessels: BinaryMask,
    pub candidates: CandidateSet,
}

impl Fixture {
    pub fn new(size: usize, seed: u64) -> Self {
        let params = SynthParams { size, ..SynthParams::default() };
        let s = synthesize(seed, 0, &params).expect("valid synthetic parameters");
        let fov = FovMask::new(s.fov).expect("nonempty field of view");
        let candidates = detect_candidates(&s.image, &fov, &CandidateParams::default()).expect("candidate detection");
        Self {
            image: s.image,
            fov,
            vessels: s.vessel_mask,
            candidates,
        }
    }
}
