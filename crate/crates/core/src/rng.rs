//! Keyed random streams.
//!
//! Every random decision draws from a ChaCha stream whose seed is a hash of
//! `(global seed, identity, stage tag, index)`, so results never depend on
//! scheduling or on how many other identities were generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_tag(tag: &str) -> u64 {
    // FNV-1a; stable across platforms and releases.
    tag.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// 256-bit stream seed for a key.
pub fn stream_seed(seed: u64, identity: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ identity);
    h = splitmix64(h ^ hash_tag(tag));
    h = splitmix64(h ^ index);
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    out
}

/// Independent stream for `(seed, identity, tag, index)`.
pub fn stream(seed: u64, identity: u64, tag: &str, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(stream_seed(seed, identity, tag, index))
}
