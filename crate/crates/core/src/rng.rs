//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by a
//! base seed plus a list of keys (purpose tag, n, trial index, ...). Two cells
//! with different keys never share state, so cells can be evaluated in any
//! order or in parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags mixed into stream keys.
pub mod tag {
    pub const SIGMA: u64 = 1;
    pub const ROW: u64 = 2;
    pub const WORD: u64 = 3;
    pub const TAIL: u64 = 4;
    pub const EVOLUTION: u64 = 5;
    pub const DIRECTION: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `seed` addressed by `keys`.
pub fn stream(seed: u64, keys: &[u64]) -> Stream {
    let mut id = 0x243f_6a88_85a3_08d3u64;
    for &k in keys {
        id = splitmix64(id ^ k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A 64-bit seed drawn from the stream `(seed, keys)`, for APIs that take a
/// seed rather than a stream.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    use rand::Rng;
    stream(seed, keys).random()
}
