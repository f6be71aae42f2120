//! Stable seed derivation.
//!
//! `derive(master, tags)` folds each tag into the state with the SplitMix64
//! finalizer. The mapping is part of the reproducibility contract: changing it
//! changes every bootstrap sample and Monte Carlo stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for the stream identified by `tags`.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master.wrapping_add(GOLDEN_GAMMA));
    for &tag in tags {
        state = mix(state ^ mix(tag.wrapping_add(GOLDEN_GAMMA)).wrapping_add(GOLDEN_GAMMA));
    }
    state
}

/// Seeded generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
