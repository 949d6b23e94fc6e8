//! Text normalization and content digests.

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// NFC, trimmed, internal whitespace runs collapsed to one space.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content-derived item id: first 128 bits of SHA-256 over the normalized text.
pub fn content_id(text: &str) -> String {
    let digest = Sha256::digest(normalize(text).as_bytes());
    hex::encode(&digest[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_whitespace_and_composes() {
        assert_eq!(normalize("  a \t b\n\nc  "), "a b c");
        // "e" + combining acute vs precomposed
        assert_eq!(normalize("cafe\u{301}"), normalize("caf\u{e9}"));
    }

    #[test]
    fn content_id_ignores_spacing() {
        assert_eq!(content_id("How are  you?"), content_id(" How are you? "));
        assert_ne!(content_id("a"), content_id("b"));
        assert_eq!(content_id("x").len(), 32);
    }
}
