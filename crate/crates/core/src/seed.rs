//! Deterministic derivation of per-item random streams.
//!
//! All randomness in the pipeline flows from a single `u64` seed. Wherever
//! an operation needs an independent stream per item (per interview, per
//! pair), the stream is derived from `(seed, label, item id)` through
//! SHA-256 so results do not depend on item order, scheduling, or the
//! process environment. Identical inputs always yield identical streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// RNG for an item-scoped stream derived from `(seed, label, id)`.
///
/// `label` namespaces the stream so two uses of the same id inside one
/// operation (e.g. interview selection vs. window placement) stay
/// independent.
pub fn item_rng(seed: u64, label: &str, id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(label.as_bytes());
    hasher.update([0x1f]);
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// RNG for operations that consume the run seed directly.
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
