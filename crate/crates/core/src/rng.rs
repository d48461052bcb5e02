//! Seeded random streams.
//!
//! Every stochastic quantity is drawn from a stream identified by a base seed
//! and a path of counters (trajectory index, step index, purpose tag). Streams
//! never cross worker boundaries, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod tag {
    pub const TRAJECTORY: u64 = 0x7472_616a;
    pub const INITIAL_STATE: u64 = 0x7830;
    pub const STEP_SCORE: u64 = 0x7363_6f72;
    pub const OBSERVATION: u64 = 0x6f62_7376;
    pub const GAMMA: u64 = 0x6761_6d6d;
    pub const DISCRETIZE: u64 = 0x6469_7363;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a counter path.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(base: u64, path: &[u64]) -> Stream {
    stream(derive_seed(base, path))
}
