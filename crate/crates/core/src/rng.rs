//! Seed handling. Every random choice in the crate flows from a `u64` seed
//! through [`seeded`], and per-item streams are derived with [`mix64`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate. ChaCha output is specified
/// independently of platform and pointer width.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64-style mix of a base seed and an item index.
///
/// Used to give each tree of an ensemble its own stream, so results do not
/// depend on the order (or thread) in which trees are built.
pub fn mix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a. Used for feature hashing and container checksums, so the
/// exact function is part of the on-disk contract.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
