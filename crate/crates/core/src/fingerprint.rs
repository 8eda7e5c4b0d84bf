//! Content hashes used for caching and output provenance.

use std::fmt::Debug;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of the JSON encoding of `value`, hex encoded.
///
/// Values that cannot be serialized (designs holding a code-supplied electrolyte model)
/// fall back to their `Debug` rendering.
pub fn fingerprint<T: Serialize + Debug + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_else(|_| format!("{value:?}").into_bytes());
    hex::encode(Sha256::digest(&bytes))
}

/// First 16 hex digits of [`fingerprint`].
pub fn short_fingerprint<T: Serialize + Debug + ?Sized>(value: &T) -> String {
    fingerprint(value)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_sensitive() {
        let a = fingerprint(&(1.0f64, "x"));
        assert_eq!(a, fingerprint(&(1.0f64, "x")));
        assert_ne!(a, fingerprint(&(1.0000001f64, "x")));
        assert_eq!(a.len(), 64);
        assert_eq!(short_fingerprint(&(1.0f64, "x")), a[..16]);
    }
}
