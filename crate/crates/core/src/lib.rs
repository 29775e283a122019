//! Structured relational memory for detecting and characterizing inputs from unseen classes.
//!
//! A primary classifier is trained on the known classes; a small representation bank is selected
//! from its higher-layer features; a skew-symmetric Siamese comparator learns a relative attribute
//! over bank pairs; and at inference time each known class votes on how a test input relates to
//! it, yielding a ternary signature that either matches a known class or marks the input as novel.

pub mod array;
mod binio;
pub mod error;
pub mod nn;

pub use array::{DenseArray, Scalar};
pub use error::{Error, Result};
pub mod bank;
pub mod comparator;
pub mod data;
pub mod eval;
pub mod joint;
pub mod pipeline;
pub mod primary;
pub mod relation;
pub mod selftest;

/// First eight bytes of the SHA-256 digest, little-endian.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
