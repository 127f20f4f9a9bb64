//! Child seeds derived by hashing, so streams never depend on execution order.

use sha2::{Digest, Sha256};

/// `SHA-256(master || tag || 0 || indices...)`, first 8 bytes little-endian.
pub fn derive_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
}
