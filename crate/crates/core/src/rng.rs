//! Deterministic RNG substreams.
//!
//! Every random draw in the crate comes from a [`StreamRng`] keyed by a root
//! seed and a path of integer tags, e.g. `(seed, [PLAN, k, m])`. Because each
//! parallel task owns its own key, results never depend on scheduling order
//! or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Tags separating the independent streams used by the library.
pub mod tag {
    pub const LOADINGS: u64 = 0x4c4f_4144;
    pub const SCORES: u64 = 0x5343_4f52;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const PLAN: u64 = 0x504c_414e;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const DATA: u64 = 0x4441_5441;
    pub const METHOD: u64 = 0x4d45_5448;
    pub const SPIKE: u64 = 0x5350_494b;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a tag path into a single 64-bit key.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut key = splitmix64(&mut state);
    for &t in path {
        state ^= t.wrapping_mul(0xd6e8_feb8_6659_fd93) ^ key;
        key = splitmix64(&mut state);
    }
    key
}

/// Returns the generator for the substream `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    StreamRng::from_seed(key)
}

/// FNV-1a hash of a label; stable across platforms and toolchains.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
