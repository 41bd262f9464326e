//! Derivation of independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The PRNG used for every stochastic component.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a base seed with a path of tags into a new seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tags))
}

/// Stream tags, so that no two components ever share a stream.
pub mod tag {
    pub const ARRIVALS: u64 = 1;
    pub const TURNS: u64 = 2;
    pub const RATIO_NOISE: u64 = 3;
    pub const POLICY_INIT: u64 = 4;
    pub const ACTIONS: u64 = 5;
    pub const MINIBATCH: u64 = 6;
    pub const ROLLOUT: u64 = 7;
    pub const EVAL: u64 = 8;
}
