//! Stable hashing helpers shared by splitting, simulation and fixtures.

use sha2::{Digest, Sha256};

/// First eight bytes of the SHA-256 of the parts joined by NUL.
pub(crate) fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 8 bytes"))
}

/// Uniform draw in `[0, 1)` derived from [`stable_hash`].
pub(crate) fn unit_hash(parts: &[&[u8]]) -> f64 {
    (stable_hash(parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Hex SHA-256 of the parts joined by NUL.
pub(crate) fn hex_digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
