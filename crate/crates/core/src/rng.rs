//! Seeded random streams.
//!
//! Every stochastic step takes an explicit generator so that independent
//! consumers (mask views, noise injection, weight init) can be derived from
//! one master seed without sharing state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a tag into a base seed (splitmix64 finalizer) so derived streams
/// for different purposes do not collide.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags used across the crate.
pub mod tags {
    pub const NOISE: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const MASK: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const GRAPH: u64 = 6;
    pub const FEATURES: u64 = 7;
}
