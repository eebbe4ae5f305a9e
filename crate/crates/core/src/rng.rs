//! Seed fan-out.
//!
//! A single root seed is split into independent per-episode, per-agent and
//! per-environment streams with a SplitMix64 finalizer, so every stream is a
//! pure function of `(root, path)` and never depends on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` along `path`.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    let mut state = mix(root.wrapping_add(GOLDEN));
    for &p in path {
        state = mix(state ^ mix(p.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)));
    }
    state
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tags used as the first element of a derivation path.
pub mod tag {
    pub const ENV: u64 = 0;
    pub const AGENT: u64 = 1;
    pub const FOLLOWER_BATCH: u64 = 2;
    pub const LEADER_BATCH: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const INIT: u64 = 5;
    pub const LEARNER: u64 = 6;
    pub const TARGET: u64 = 7;
}
