//! Seed derivation and per-instance draws.
//!
//! Everything hashes with SHA-256 so that draws are identical on every
//! platform and independent of iteration order.

use sha2::{Digest, Sha256};

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
}

/// Seed for a named pipeline stage.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    digest_u64(&[&seed.to_le_bytes(), stage.as_bytes()])
}

/// Uniform draw in `[0, 1)` for one instance.
pub fn unit_draw(seed: u64, id: &str) -> f64 {
    let bits = digest_u64(&[&seed.to_le_bytes(), id.as_bytes()]) >> 11;
    bits as f64 / (1u64 << 53) as f64
}
