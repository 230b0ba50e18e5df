//! Seed derivation. Every random decision in a run is drawn from a stream
//! keyed by the master seed plus a textual path, so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type LeapRng = ChaCha8Rng;

/// Derive a child seed from a parent seed and a list of labels.
pub fn derive_seed(parent: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> LeapRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parent: u64, labels: &[&str]) -> LeapRng {
    rng_from_seed(derive_seed(parent, labels))
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
