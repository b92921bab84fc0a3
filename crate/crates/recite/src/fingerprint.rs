//! Stable content hashes (SHA-256 over canonical JSON).

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a value's canonical (key-sorted) JSON form.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let line = crate::jsonl::to_line(value).expect("hashable values serialize");
    sha256_hex(line.as_bytes())
}

/// Hash used to key scripted responses: SHA-256 of the prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn map_order_does_not_matter() {
        let a: std::collections::HashMap<&str, u32> = [("x", 1), ("y", 2)].into_iter().collect();
        let b: std::collections::HashMap<&str, u32> = [("y", 2), ("x", 1)].into_iter().collect();
        assert_eq!(content_hash(&a), content_hash(&b));
    }
}
