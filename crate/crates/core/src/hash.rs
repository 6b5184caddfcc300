//! Stable content hashes used for ids, prompt keys and RNG stream derivation.

use alloc::string::String;

use sha2::{Digest, Sha256};

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// First 16 hex characters of the SHA-256 digest.
pub fn short_hex(data: &[u8]) -> String {
    let mut s = sha256_hex(data);
    s.truncate(16);
    s
}

pub fn digest8(data: &[u8]) -> [u8; 8] {
    let full = Sha256::digest(data);
    let mut out = [0u8; 8];
    out.copy_from_slice(&full[..8]);
    out
}

/// Derives a 64-bit seed from a list of labelled parts. Parts are length
/// prefixed so `("ab", "c")` and `("a", "bc")` differ.
pub fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let full = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&full[..8]);
    u64::from_le_bytes(out)
}
