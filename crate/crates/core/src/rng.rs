//! Purpose-tagged random streams.
//!
//! Every random decision in the engine draws from a stream derived from the
//! master seed, a purpose tag and a short list of indices (round, slot, ...).
//! Streams never depend on execution order, so parallel work stays
//! reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

fn digest(seed: u64, tag: &str, parts: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    hasher.finalize().into()
}

/// Derives a child seed for `tag` and `parts` from `seed`.
pub fn derive_seed(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let d = digest(seed, tag, parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Opens the random stream for `tag` and `parts` under `seed`.
pub fn stream(seed: u64, tag: &str, parts: &[u64]) -> StreamRng {
    ChaCha20Rng::from_seed(digest(seed, tag, parts))
}

/// Stream keyed directly by a seed value, used by operations that take a
/// single `seed` argument.
pub fn from_seed(seed: u64) -> StreamRng {
    stream(seed, "", &[])
}
