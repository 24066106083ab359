//! Stable, platform-independent hashing.
//!
//! `std::hash` makes no cross-version stability promises, so anything that
//! must reproduce byte-identical outputs across runs (corpus splits, the
//! mock feature-hashing embedder, config fingerprints) goes through the
//! fixed algorithms here instead.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer; spreads low-entropy inputs across all 64 bits.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Hash of a string mixed with a seed, for seeded deterministic decisions.
pub fn seeded_hash(s: &str, seed: u64) -> u64 {
    splitmix64(fnv1a64(s.as_bytes()) ^ seed)
}
