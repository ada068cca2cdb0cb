//! Seeded random streams.
//!
//! All randomness flows from one root seed through named substreams
//! (`prepare`, `train`, `eval`, ...), so changing how one stage consumes
//! randomness cannot perturb the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Deterministic generator for a named substream of `root_seed`.
pub fn substream(root_seed: u64, name: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// Base integer for substreams that derive per-item seeds by offset
/// (worker k uses `substream_base(seed, name) + k`), keeping results
/// independent of iteration order.
pub fn substream_base(root_seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Serializable position of a ChaCha stream: (seed, word position).
pub type RngState = ([u8; 32], u128);

pub fn save_state(rng: &ChaCha12Rng) -> RngState {
    (rng.get_seed(), rng.get_word_pos())
}

pub fn restore_state(state: &RngState) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::from_seed(state.0);
    rng.set_word_pos(state.1);
    rng
}
