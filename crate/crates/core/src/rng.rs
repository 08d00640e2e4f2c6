//! Seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded by a
//! 64-bit key. Keys are derived by hashing (master seed, replica index,
//! vertex path, purpose tag) so that a draw never depends on scheduling
//! order or on which other parts of a tree happened to be explored.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b).rotate_left(17))
}

/// Stream for replica `index` of a run with master seed `seed`.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    combine(mix64(seed), index)
}

pub fn stream(key: u64) -> StreamRng {
    StreamRng::seed_from_u64(key)
}

pub(crate) mod tag {
    pub const LINKS: u64 = 0x4c49_4e4b;
    pub const OFFSPRING: u64 = 0x4f46_4653;
    pub const PRUNE: u64 = 0x5052_554e;
}
