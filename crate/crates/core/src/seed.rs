//! Labelled seed substreams derived from one global seed.

use sha2::{Digest, Sha256};

/// Seed for the substream `label` at grid position `indices`.
///
/// Each stage hashes its own label, so re-running one stage never shifts the
/// randomness of another.
pub fn derive_seed(global: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
