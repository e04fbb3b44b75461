//! Seeded named-stream random number generation.
//!
//! Every random draw in the crate flows from a single 64-bit seed plus a
//! stream name. Adding a consumer with a new name never perturbs existing
//! streams, which keeps datasets and experiments byte-reproducible as the
//! code evolves.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stream name; cheap, stable across platforms.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic RNG for `(seed, stream)`. Distinct stream names yield
/// independent ChaCha8 keys.
pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(stream.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&fnv1a64(b"cfattrib").to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
