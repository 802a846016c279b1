//! Seed plumbing. Every random draw in the crate comes from a ChaCha stream
//! whose seed is derived from a user seed plus a fixed domain tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TwinRng = ChaCha8Rng;

/// SplitMix64 finalizer over the combination of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, tag: u64) -> TwinRng {
    TwinRng::seed_from_u64(mix(seed, tag))
}
