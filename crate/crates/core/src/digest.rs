use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Hash of an ordered term list; the separator cannot occur inside a token.
pub fn vocabulary_hash(terms: &[String]) -> String {
    let mut h = Sha256::new();
    for t in terms {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
