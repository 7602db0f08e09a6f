//! Key hierarchy, authenticated batch encryption, and the KEM + signature
//! key-delivery handshake.
//!
//! The KEM and signature algorithms are pluggable. Two instantiations ship:
//! the post-quantum pair (Kyber512, Dilithium2) and a built-in test-grade
//! pair (hash-based Diffie–Hellman KEM and deterministic Schnorr signatures
//! over the RFC 3526 2048-bit MODP group) that is fully seed-reproducible.

mod bench;
mod envelope;
mod keyring;
mod schemes;
mod symmetric;

pub use bench::{bench_crypto, summarize, BenchReport, BenchRow};
pub use envelope::{
    deliver_key, open_envelope, request_key, KeyEnvelope, KeyRequest, SignedKeyRequest,
    FRESHNESS_WINDOW_MS,
};
pub use keyring::{derive_child_key, KeyRing};
pub use schemes::{
    BuiltinKem, BuiltinSignature, Dilithium2Signature, Encapsulation, KemKeyPair, KemScheme,
    Kyber512Kem, SignatureKeyPair, SignatureScheme,
};
pub use symmetric::{decrypt_batch, encrypt_batch, encrypt_batch_with_nonce, EncryptedBatch};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AccessError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kem failure: {0}")]
    Kem(String),
    #[error("signature invalid")]
    SignatureInvalid,
    #[error("authorization refused: {0}")]
    Unauthorized(String),
    #[error("stale request: age {age_ms} ms exceeds freshness window {window_ms} ms")]
    Stale { age_ms: i64, window_ms: u64 },
    #[error("authentication failure: {0}")]
    Authentication(String),
    #[error("serialization failure: {0}")]
    Serialization(#[from] egw_canon::CanonError),
}
