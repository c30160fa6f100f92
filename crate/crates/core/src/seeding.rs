//! Deterministic seed derivation.
//!
//! Every randomized step in the pipeline draws from a ChaCha8 stream whose
//! seed is derived here, so adding tiles or reordering work never reshuffles
//! an existing selection. Derivation is self-contained (splitmix64 + FNV-1a)
//! and does not depend on any RNG library internals.

use rand_chacha::rand_core::SeedableRng;

pub use rand::Rng;
pub use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; full-avalanche mix of a 64-bit value.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a parent seed and a numeric stream tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derive a child seed from a parent seed and a named stream.
///
/// Names are hashed with FNV-1a over each part with a separator, so
/// `["a", "bc"]` and `["ab", "c"]` map to different streams.
pub fn derive_named(seed: u64, parts: &[&str]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x1000_0000_01b3;
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in part.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        h ^= 0x1f; // separator
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix(seed, h)
}

/// ChaCha8 stream for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One uniform draw from `lo..=hi` on the stream for `seed`.
pub fn uniform_usize(seed: u64, lo: usize, hi: usize) -> usize {
    use rand::Rng;
    debug_assert!(lo <= hi);
    rng(seed).random_range(lo..=hi)
}
