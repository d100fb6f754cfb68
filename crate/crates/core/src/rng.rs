//! Seed streams.
//!
//! Every randomized operation draws from a [`ChaCha8Rng`] derived from
//! `(seed, domain, index)`. Deriving per-item streams instead of sharing one
//! generator keeps results independent of iteration order, so batch work can
//! run in parallel and still produce identical bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeedStream = ChaCha8Rng;

/// Derives a deterministic stream for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: &str, index: u64) -> SeedStream {
    let mut hasher = Sha256::new();
    hasher.update(b"latentaug/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed, used when a sub-config needs its own integer seed.
pub fn child_seed(seed: u64, domain: &str) -> u64 {
    use rand::RngCore;
    stream(seed, domain, u64::MAX).next_u64()
}
