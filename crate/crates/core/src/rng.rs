//! Deterministic, order-independent random streams.
//!
//! Every work item (scan point, repetition, gate) derives its own ChaCha
//! stream from the run seed and a small key, so results do not depend on the
//! order or thread in which items are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// splitmix64 finaliser; used to spread structured keys over the seed space.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, keys...)`.
pub fn stream(seed: u64, keys: &[u64]) -> Stream {
    let mut s = mix(seed);
    for &k in keys {
        s = mix(s ^ mix(k));
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Purpose tags so unrelated draws never share a stream.
pub mod tag {
    pub const POSITIONS: u64 = 1;
    pub const MEASURE: u64 = 2;
    pub const LOADING: u64 = 3;
    pub const LOSS: u64 = 4;
    pub const PHASES: u64 = 5;
    pub const GATE_BANK: u64 = 6;
}
