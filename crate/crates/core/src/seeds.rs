//! Counter-based seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`.
//! Child seeds are derived from a parent seed and a counter with the
//! SplitMix64 finalizer, so replicate `k` of any batch job can be recomputed
//! in isolation and the schedule never affects the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter tag for the split shuffle of a generated or resampled dataset.
pub const SPLIT_STREAM: u64 = 0x5b1d;
/// Counter tag for cross-validation folds.
pub const CV_STREAM: u64 = 0xcf01;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for child `counter` of `base`.
pub fn derive_seed(base: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(counter.wrapping_add(0x2545_f491_4f6c_dd1d)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
