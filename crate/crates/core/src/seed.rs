//! Seed derivation. Every stochastic decision is seeded from
//! `(root seed, stage, item id)` so partial reruns reproduce exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, stage: &str, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((stage.len() as u64).to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn derive_rng(root: u64, stage: &str, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stage, id))
}
