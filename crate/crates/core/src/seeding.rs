//! Deterministic seed derivation.
//!
//! All randomness in the pipeline flows through [`ChaCha8Rng`] instances
//! derived from a master seed plus a stream label and counter (or string
//! key). Hashing the triple gives independent streams per sample / per
//! speaker / per utterance, so work can be distributed across threads in any
//! order and still produce bit-identical artifacts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// RNG for (master seed, stream label, counter).
pub fn derive_rng(master_seed: u64, stream: &str, counter: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update([0x1f]);
    h.update(stream.as_bytes());
    h.update([0x1f]);
    h.update(counter.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// RNG for (master seed, stream label, string key), for id-keyed streams
/// where a stable integer index is not natural (e.g. speaker ids).
pub fn derive_rng_keyed(master_seed: u64, stream: &str, key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update([0x1f]);
    h.update(stream.as_bytes());
    h.update([0x1f]);
    h.update(key.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}
