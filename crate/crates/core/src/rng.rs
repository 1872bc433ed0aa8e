//! Deterministic stream derivation.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream derived
//! from `(seed, tag, index)`. Streams with distinct tags or indices are
//! statistically independent, and the derivation is stable across platforms,
//! thread counts and block sizes, which is what makes reruns bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// 32-byte ChaCha seed derived from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut state = seed;
    state = splitmix64(&mut state) ^ fnv1a(tag.as_bytes());
    state = splitmix64(&mut state) ^ index;
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// Independent ChaCha stream for the given `(seed, tag, index)` triple.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, tag, index))
}

/// Derived sub-seed, for handing each task in a batch its own seed space.
pub fn derive_u64(seed: u64, tag: &str, index: u64) -> u64 {
    let mut state = seed;
    state = splitmix64(&mut state) ^ fnv1a(tag.as_bytes());
    state = splitmix64(&mut state) ^ index;
    splitmix64(&mut state)
}
