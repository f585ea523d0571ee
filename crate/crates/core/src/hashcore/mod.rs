//! Byte-level primitives shared by every other module.
//!
//! Everything here is pure: SHA-256 digests, prefix-free domain-separated
//! commitments, canonical JSON and the fixed-point decimal used for every
//! fractional metric that ends up inside a hashed document.

mod canonical;
mod fixed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use canonical::{
    canonicalize, is_canonical, parse_canonical, to_canonical_bytes, CanonicalDocument,
    CanonicalError,
};
pub use fixed::{Fixed6, FixedError};

/// Width in bytes of every digest in the system.
pub const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("expected a {expected}-byte value, got {actual} bytes")]
    WrongWidth { expected: usize, actual: usize },
    #[error("invalid digest hex: {0}")]
    InvalidHex(String),
    #[error("preimage does not start with label {0:?}")]
    LabelMismatch(&'static str),
}

/// A 32-byte SHA-256 digest. Rendered as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest32([u8; DIGEST_LEN]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; DIGEST_LEN]);

    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest32(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, HashError> {
        let arr: [u8; DIGEST_LEN] = bytes.try_into().map_err(|_| HashError::WrongWidth {
            expected: DIGEST_LEN,
            actual: bytes.len(),
        })?;
        Ok(Digest32(arr))
    }

    /// Parses strict lowercase hex with no prefix.
    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        if s.len() != DIGEST_LEN * 2
            || !s
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        {
            return Err(HashError::InvalidHex(s.to_string()));
        }
        let raw = hex::decode(s).map_err(|e| HashError::InvalidHex(e.to_string()))?;
        Self::from_slice(&raw)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Returns a copy with bit `bit` (0..256) inverted.
    pub fn flip_bit(&self, bit: usize) -> Self {
        let mut out = self.0;
        out[(bit / 8) % DIGEST_LEN] ^= 1 << (bit % 8);
        Digest32(out)
    }
}

impl AsRef<[u8]> for Digest32 {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_hex())
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest32 {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for Digest32 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest32::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest32 {
    Digest32(Sha256::digest(data).into())
}

/// Registry of domain-separation labels. No label is a prefix of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainLabel {
    Epoch,
    Leaf,
    Node,
    Chain,
    UiRoot,
}

impl DomainLabel {
    pub const ALL: [DomainLabel; 5] = [
        DomainLabel::Epoch,
        DomainLabel::Leaf,
        DomainLabel::Node,
        DomainLabel::Chain,
        DomainLabel::UiRoot,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            DomainLabel::Epoch => "EPOCH:",
            DomainLabel::Leaf => "LEAF:",
            DomainLabel::Node => "NODE:",
            DomainLabel::Chain => "CHAIN:",
            DomainLabel::UiRoot => "UIROOT:",
        }
    }

    pub const fn as_bytes(self) -> &'static [u8] {
        self.as_str().as_bytes()
    }
}

/// The exact bytes hashed by [`domain_hash`]: `label ‖ part_1 ‖ … ‖ part_n`.
pub fn preimage(label: DomainLabel, parts: &[Digest32]) -> Vec<u8> {
    let prefix = label.as_bytes();
    let mut buf = Vec::with_capacity(prefix.len() + parts.len() * DIGEST_LEN);
    buf.extend_from_slice(prefix);
    for part in parts {
        buf.extend_from_slice(part.as_bytes());
    }
    buf
}

/// Inverse of [`preimage`] for a known label and part count.
pub fn split_preimage(
    label: DomainLabel,
    bytes: &[u8],
    part_count: usize,
) -> Result<Vec<Digest32>, HashError> {
    let body = bytes
        .strip_prefix(label.as_bytes())
        .ok_or(HashError::LabelMismatch(label.as_str()))?;
    if body.len() != part_count * DIGEST_LEN {
        return Err(HashError::WrongWidth {
            expected: part_count * DIGEST_LEN,
            actual: body.len(),
        });
    }
    body.chunks_exact(DIGEST_LEN)
        .map(Digest32::from_slice)
        .collect()
}

pub fn domain_hash(label: DomainLabel, parts: &[Digest32]) -> Digest32 {
    hash(&preimage(label, parts))
}

/// Like [`domain_hash`] but over untyped byte slices, rejecting any part
/// that is not exactly 32 bytes wide.
pub fn domain_hash_slices(label: DomainLabel, parts: &[&[u8]]) -> Result<Digest32, HashError> {
    let typed = parts
        .iter()
        .map(|p| Digest32::from_slice(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(domain_hash(label, &typed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hash(b"anything at all").as_bytes().len(), 32);
    }

    #[test]
    fn labels_are_mutually_prefix_free() {
        for a in DomainLabel::ALL {
            for b in DomainLabel::ALL {
                if a != b {
                    assert!(!a.as_bytes().starts_with(b.as_bytes()), "{a:?} vs {b:?}");
                }
            }
            assert!(a.as_str().is_ascii() && a.as_str().ends_with(':'));
        }
    }

    #[test]
    fn epoch_hash_of_zero_parts_expands_directly() {
        let mut expected = b"EPOCH:".to_vec();
        expected.extend_from_slice(&[0u8; 64]);
        assert_eq!(
            domain_hash(DomainLabel::Epoch, &[Digest32::ZERO, Digest32::ZERO]),
            hash(&expected)
        );
    }

    #[test]
    fn part_order_matters() {
        let r = hash(b"r");
        let u = hash(b"u");
        assert_ne!(
            domain_hash(DomainLabel::Epoch, &[r, u]),
            domain_hash(DomainLabel::Epoch, &[u, r])
        );
    }

    #[test]
    fn leaf_and_node_labels_separate() {
        // frozen with an external sha256 tool over "LEAF:"/"NODE:" ‖ sha256("x")
        let x = hash(b"x");
        let leaf = domain_hash(DomainLabel::Leaf, &[x]);
        let node = domain_hash(DomainLabel::Node, &[x]);
        assert_ne!(leaf, node);
        let mut manual = b"LEAF:".to_vec();
        manual.extend_from_slice(x.as_bytes());
        assert_eq!(leaf, hash(&manual));
    }

    #[test]
    fn wrong_width_part_is_rejected() {
        let err = domain_hash_slices(DomainLabel::Epoch, &[&[0u8; 32], &[0u8; 31]]).unwrap_err();
        assert_eq!(
            err,
            HashError::WrongWidth {
                expected: 32,
                actual: 31
            }
        );
        assert!(domain_hash_slices(DomainLabel::Epoch, &[&[0u8; 32], &[1u8; 32]]).is_ok());
    }

    #[test]
    fn preimage_round_trips() {
        let parts = [hash(b"a"), hash(b"b")];
        let bytes = preimage(DomainLabel::Epoch, &parts);
        assert_eq!(
            split_preimage(DomainLabel::Epoch, &bytes, 2).unwrap(),
            parts
        );
        assert!(split_preimage(DomainLabel::Leaf, &bytes, 2).is_err());
        assert!(split_preimage(DomainLabel::Epoch, &bytes, 3).is_err());
    }

    #[test]
    fn hex_is_strict_lowercase() {
        let d = hash(b"abc");
        assert_eq!(Digest32::from_hex(&d.to_hex()).unwrap(), d);
        assert!(Digest32::from_hex(&d.to_hex().to_uppercase()).is_err());
        assert!(Digest32::from_hex("abcd").is_err());
        assert!(Digest32::from_hex(&format!("0x{}", &d.to_hex()[2..])).is_err());
    }

    #[test]
    fn flip_bit_changes_exactly_one_bit() {
        let d = hash(b"abc");
        for bit in [0, 7, 8, 255] {
            let f = d.flip_bit(bit);
            let diff: u32 = d
                .as_bytes()
                .iter()
                .zip(f.as_bytes())
                .map(|(a, b)| (a ^ b).count_ones())
                .sum();
            assert_eq!(diff, 1);
        }
    }
}
