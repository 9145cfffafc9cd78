//! Deterministic seed derivation for parallel lanes.
//!
//! Every parallelizable loop in the crate (sampling batches, chains, grid
//! points, calibration candidates) owns an independent stream derived from
//! `(master seed, lane index)` so results are reproducible for a fixed
//! master seed and lane count regardless of execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby (seed, lane) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a lane index.
pub fn derive_seed(master: u64, lane: u64) -> u64 {
    mix(master ^ mix(lane.wrapping_add(0x51ed_270b)))
}

/// A fresh stream for the given master seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A fresh stream for lane `lane` under master seed `seed`.
pub fn substream(seed: u64, lane: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, lane))
}
