//! Signed key requests and the KEM-wrapped key-delivery envelope.

use egw_canon::{canonical_json, sha256_parts, HexBytes};
use serde::{Deserialize, Serialize};

use crate::schemes::{KemKeyPair, KemScheme, SignatureKeyPair, SignatureScheme};
use crate::AccessError;

/// Replay window for signed key requests.
pub const FRESHNESS_WINDOW_MS: u64 = 60_000;

const WRAP_STREAM_LABEL: &[u8] = b"egw/wrap-stream/v1";
const WRAP_TAG_LABEL: &[u8] = b"egw/wrap-tag/v1";
const WRAP_NONCE_LABEL: &[u8] = b"egw/wrap-nonce/v1";

/// The statement a requester signs: who asks for which batch, and when.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRequest {
    pub requester_id: String,
    pub batch_id: String,
    /// Milliseconds since the epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedKeyRequest {
    pub request: KeyRequest,
    pub signature: HexBytes,
}

/// Body covered by the envelope signature (everything but the signature).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EnvelopeBody {
    requester_id: String,
    batch_id: String,
    kem_algorithm: String,
    kem_ciphertext: HexBytes,
    wrapped_batch_key: HexBytes,
    request_signature: HexBytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEnvelope {
    pub requester_id: String,
    pub batch_id: String,
    pub kem_algorithm: String,
    pub kem_ciphertext: HexBytes,
    /// Batch key under the KEM shared secret: 32 stream bytes ‖ 32 tag bytes.
    pub wrapped_batch_key: HexBytes,
    pub request_signature: HexBytes,
    pub envelope_signature: HexBytes,
}

impl KeyEnvelope {
    fn body(&self) -> EnvelopeBody {
        EnvelopeBody {
            requester_id: self.requester_id.clone(),
            batch_id: self.batch_id.clone(),
            kem_algorithm: self.kem_algorithm.clone(),
            kem_ciphertext: self.kem_ciphertext.clone(),
            wrapped_batch_key: self.wrapped_batch_key.clone(),
            request_signature: self.request_signature.clone(),
        }
    }

    /// Canonical wire form.
    pub fn to_wire(&self) -> Result<Vec<u8>, AccessError> {
        Ok(canonical_json(self)?)
    }
}

/// Sign a key request over its canonical serialization.
pub fn request_key(
    scheme: &dyn SignatureScheme,
    signer: &SignatureKeyPair,
    requester_id: &str,
    batch_id: &str,
    timestamp: u64,
) -> Result<SignedKeyRequest, AccessError> {
    let request = KeyRequest {
        requester_id: requester_id.to_string(),
        batch_id: batch_id.to_string(),
        timestamp,
    };
    let message = canonical_json(&request)?;
    let signature = scheme.sign(signer, &message)?;
    Ok(SignedKeyRequest { request, signature: HexBytes(signature) })
}

/// Verify a signed request against a known verification key and the
/// freshness window.
pub fn verify_request(
    scheme: &dyn SignatureScheme,
    signed: &SignedKeyRequest,
    requester_verification_key: &[u8],
    now_ms: u64,
) -> Result<(), AccessError> {
    let message = canonical_json(&signed.request)?;
    if !scheme.verify(requester_verification_key, &message, &signed.signature.0) {
        return Err(AccessError::Unauthorized("request signature invalid".into()));
    }
    let age_ms = now_ms as i64 - signed.request.timestamp as i64;
    if age_ms < 0 || age_ms as u64 > FRESHNESS_WINDOW_MS {
        return Err(AccessError::Stale { age_ms, window_ms: FRESHNESS_WINDOW_MS });
    }
    Ok(())
}

fn wrap_key(shared_secret: &[u8; 32], kem_ciphertext: &[u8], batch_key: &[u8; 32]) -> Vec<u8> {
    let nonce = sha256_parts(&[WRAP_NONCE_LABEL, kem_ciphertext]);
    let stream = sha256_parts(&[WRAP_STREAM_LABEL, shared_secret, &nonce.0]);
    let mut wrapped: Vec<u8> =
        batch_key.iter().zip(stream.0.iter()).map(|(k, s)| k ^ s).collect();
    let tag = sha256_parts(&[WRAP_TAG_LABEL, shared_secret, &nonce.0, &wrapped]);
    wrapped.extend_from_slice(&tag.0);
    wrapped
}

fn unwrap_key(
    shared_secret: &[u8; 32],
    kem_ciphertext: &[u8],
    wrapped: &[u8],
) -> Result<[u8; 32], AccessError> {
    if wrapped.len() != 64 {
        return Err(AccessError::Authentication("wrapped key must be 64 bytes".into()));
    }
    let (cipher, tag) = wrapped.split_at(32);
    let nonce = sha256_parts(&[WRAP_NONCE_LABEL, kem_ciphertext]);
    let expect = sha256_parts(&[WRAP_TAG_LABEL, shared_secret, &nonce.0, cipher]);
    let diff = expect.0.iter().zip(tag).fold(0u8, |acc, (a, b)| acc | (a ^ b));
    if diff != 0 {
        return Err(AccessError::Authentication("batch key unwrap failed".into()));
    }
    let stream = sha256_parts(&[WRAP_STREAM_LABEL, shared_secret, &nonce.0]);
    let mut key = [0u8; 32];
    for (k, (c, s)) in key.iter_mut().zip(cipher.iter().zip(stream.0.iter())) {
        *k = c ^ s;
    }
    Ok(key)
}

/// Authorize a fresh, correctly signed request and wrap the batch key to the
/// requester's KEM public key; the sender signs the whole envelope.
#[allow(clippy::too_many_arguments)]
pub fn deliver_key(
    sig_scheme: &dyn SignatureScheme,
    kem_scheme: &dyn KemScheme,
    signed_request: &SignedKeyRequest,
    requester_verification_key: &[u8],
    requester_kem_public_key: &[u8],
    batch_key: &[u8; 32],
    sender: &SignatureKeyPair,
    now_ms: u64,
    encapsulation_seed: &[u8; 32],
) -> Result<KeyEnvelope, AccessError> {
    verify_request(sig_scheme, signed_request, requester_verification_key, now_ms)?;
    let enc = kem_scheme.encapsulate(requester_kem_public_key, encapsulation_seed)?;
    let wrapped = wrap_key(&enc.shared_secret, &enc.ciphertext, batch_key);
    let body = EnvelopeBody {
        requester_id: signed_request.request.requester_id.clone(),
        batch_id: signed_request.request.batch_id.clone(),
        kem_algorithm: kem_scheme.algorithm_id().to_string(),
        kem_ciphertext: HexBytes(enc.ciphertext),
        wrapped_batch_key: HexBytes(wrapped),
        request_signature: signed_request.signature.clone(),
    };
    let envelope_signature = sig_scheme.sign(sender, &canonical_json(&body)?)?;
    Ok(KeyEnvelope {
        requester_id: body.requester_id,
        batch_id: body.batch_id,
        kem_algorithm: body.kem_algorithm,
        kem_ciphertext: body.kem_ciphertext,
        wrapped_batch_key: body.wrapped_batch_key,
        request_signature: body.request_signature,
        envelope_signature: HexBytes(envelope_signature),
    })
}

/// Verify the envelope signature, decapsulate, and unwrap the batch key.
/// The three failure paths have distinct error codes: `SignatureInvalid`
/// (checked before any decryption), `Kem` (structural decapsulation
/// failures), and `Authentication` (unwrap tag mismatch, which is where a
/// wrong shared secret surfaces).
pub fn open_envelope(
    sig_scheme: &dyn SignatureScheme,
    kem_scheme: &dyn KemScheme,
    envelope: &KeyEnvelope,
    own_kem_keypair: &KemKeyPair,
    sender_verification_key: &[u8],
) -> Result<[u8; 32], AccessError> {
    let body = canonical_json(&envelope.body())?;
    if !sig_scheme.verify(sender_verification_key, &body, &envelope.envelope_signature.0) {
        return Err(AccessError::SignatureInvalid);
    }
    let shared = kem_scheme.decapsulate(own_kem_keypair, &envelope.kem_ciphertext.0)?;
    unwrap_key(&shared, &envelope.kem_ciphertext.0, &envelope.wrapped_batch_key.0)
}
