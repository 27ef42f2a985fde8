//! Seed derivation.
//!
//! Every consumer of randomness owns its own generator, derived from a base
//! seed and a stream label. There is no global generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed for `stream` from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x5EED)))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child(seed: u64, stream: u64) -> Rng {
    seeded(derive_seed(seed, stream))
}

/// Stream labels used across the crate, kept in one place so they never
/// collide.
pub mod streams {
    pub const TM_STEP: u64 = 1;
    pub const CATEGORY: u64 = 2;
    pub const POOLER: u64 = 3;
    pub const DATASET: u64 = 4;
    pub const SEQUENCE_CHOICE: u64 = 5;
    pub const NOISE_POOL: u64 = 6;
    pub const TEMPORAL_NOISE: u64 = 7;
    pub const KILL: u64 = 8;
    pub const REPLICA: u64 = 9;
    pub const SYNTHETIC: u64 = 10;
}
