//! Deterministic seed derivation.
//!
//! Every randomized component receives its own stream derived from a master
//! seed and a (tag, index) pair, so results do not depend on the order in which
//! components are built or on how many threads run them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Values are arbitrary but must stay stable across releases.
pub mod tag {
    pub const GNB_PARAMS: u64 = 1;
    pub const GNB_SAMPLES: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const REPETITION: u64 = 4;
    pub const TARGET: u64 = 5;
    pub const PROXY: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const SHADOW: u64 = 8;
    pub const HALVES: u64 = 9;
    pub const ATTACK_MODEL: u64 = 10;
    pub const CALIBRATION: u64 = 11;
    pub const META: u64 = 12;
    pub const VALIDATION: u64 = 13;
    pub const ATTACK: u64 = 14;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed.
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
