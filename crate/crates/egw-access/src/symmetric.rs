//! Authenticated stream encryption for data batches.
//!
//! Keystream blocks come from a keyed hash over `nonce ‖ counter`; the tag is
//! a keyed hash binding nonce, batch id, data type and ciphertext. Decryption
//! verifies the tag before touching the payload and then checks the plaintext
//! digest, so no tamper path ever returns unauthenticated plaintext.

use egw_canon::{sha256, sha256_parts, Hash32, HexBytes};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::AccessError;

const STREAM_LABEL: &[u8] = b"egw/ae-stream/v1";
const TAG_LABEL: &[u8] = b"egw/ae-tag/v1";

pub const NONCE_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedBatch {
    pub batch_id: String,
    pub data_type: String,
    pub nonce: HexBytes,
    pub ciphertext: HexBytes,
    /// Commitment to the plaintext (the value ledger blocks carry).
    pub plaintext_digest: Hash32,
    /// Keyed authentication tag over nonce, identifiers and ciphertext.
    pub tag: Hash32,
}

fn keystream_xor(key: &[u8; 32], nonce: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (block_index, chunk) in data.chunks(32).enumerate() {
        let block = sha256_parts(&[
            STREAM_LABEL,
            key,
            nonce,
            &(block_index as u64).to_be_bytes(),
        ]);
        out.extend(chunk.iter().zip(block.0.iter()).map(|(d, k)| d ^ k));
    }
    out
}

fn compute_tag(
    key: &[u8; 32],
    nonce: &[u8],
    batch_id: &str,
    data_type: &str,
    ciphertext: &[u8],
) -> Hash32 {
    sha256_parts(&[
        TAG_LABEL,
        key,
        nonce,
        batch_id.as_bytes(),
        data_type.as_bytes(),
        ciphertext,
    ])
}

/// Encrypt with an explicit nonce. The caller owns nonce uniqueness per key.
pub fn encrypt_batch_with_nonce(
    key: &[u8; 32],
    plaintext: &[u8],
    batch_id: &str,
    data_type: &str,
    nonce: [u8; NONCE_LEN],
) -> Result<EncryptedBatch, AccessError> {
    if plaintext.is_empty() {
        return Err(AccessError::InvalidParameter("plaintext must be non-empty".into()));
    }
    let ciphertext = keystream_xor(key, &nonce, plaintext);
    let tag = compute_tag(key, &nonce, batch_id, data_type, &ciphertext);
    Ok(EncryptedBatch {
        batch_id: batch_id.to_string(),
        data_type: data_type.to_string(),
        nonce: HexBytes(nonce.to_vec()),
        ciphertext: HexBytes(ciphertext),
        plaintext_digest: sha256(plaintext),
        tag,
    })
}

/// Encrypt with a nonce drawn from the caller's RNG stream (seedable, so
/// replays stay deterministic while repeat encryptions still differ).
pub fn encrypt_batch(
    key: &[u8; 32],
    plaintext: &[u8],
    batch_id: &str,
    data_type: &str,
    rng: &mut ChaCha12Rng,
) -> Result<EncryptedBatch, AccessError> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill(&mut nonce);
    encrypt_batch_with_nonce(key, plaintext, batch_id, data_type, nonce)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Verify the tag, decrypt, and verify the plaintext commitment.
pub fn decrypt_batch(key: &[u8; 32], batch: &EncryptedBatch) -> Result<Vec<u8>, AccessError> {
    if batch.nonce.0.len() != NONCE_LEN {
        return Err(AccessError::InvalidParameter(format!(
            "nonce must be {NONCE_LEN} bytes, got {}",
            batch.nonce.0.len()
        )));
    }
    let expected = compute_tag(key, &batch.nonce.0, &batch.batch_id, &batch.data_type, &batch.ciphertext.0);
    if !constant_time_eq(&expected.0, &batch.tag.0) {
        return Err(AccessError::Authentication("batch tag mismatch".into()));
    }
    let plaintext = keystream_xor(key, &batch.nonce.0, &batch.ciphertext.0);
    if sha256(&plaintext) != batch.plaintext_digest {
        return Err(AccessError::Authentication("plaintext digest mismatch".into()));
    }
    Ok(plaintext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(99)
    }

    #[test]
    fn test_roundtrip_1kib_random_payload() {
        let mut rng = rng();
        let mut plaintext = vec![0u8; 1024];
        rng.fill(&mut plaintext[..]);
        let key = [5u8; 32];
        let batch = encrypt_batch(&key, &plaintext, "batch-1", "ecg", &mut rng).unwrap();
        assert_eq!(decrypt_batch(&key, &batch).unwrap(), plaintext);
    }

    #[test]
    fn test_every_ciphertext_bit_flip_is_rejected_on_a_small_payload() {
        let mut rng = rng();
        let key = [1u8; 32];
        let batch = encrypt_batch(&key, b"vital signs", "b", "ecg", &mut rng).unwrap();
        for byte in 0..batch.ciphertext.0.len() {
            for bit in 0..8 {
                let mut tampered = batch.clone();
                tampered.ciphertext.0[byte] ^= 1 << bit;
                assert!(matches!(
                    decrypt_batch(&key, &tampered),
                    Err(AccessError::Authentication(_))
                ));
            }
        }
    }

    #[test]
    fn test_tampered_metadata_and_digest_are_rejected() {
        let mut rng = rng();
        let key = [2u8; 32];
        let batch = encrypt_batch(&key, b"payload bytes", "batch-7", "ecg", &mut rng).unwrap();
        let mut wrong_id = batch.clone();
        wrong_id.batch_id = "batch-8".into();
        assert!(decrypt_batch(&key, &wrong_id).is_err());
        let mut wrong_type = batch.clone();
        wrong_type.data_type = "emg".into();
        assert!(decrypt_batch(&key, &wrong_type).is_err());
        let mut wrong_digest = batch.clone();
        wrong_digest.plaintext_digest.0[0] ^= 1;
        assert!(decrypt_batch(&key, &wrong_digest).is_err());
        let mut wrong_tag = batch;
        wrong_tag.tag.0[31] ^= 0x80;
        assert!(decrypt_batch(&key, &wrong_tag).is_err());
    }

    #[test]
    fn test_wrong_key_is_an_authentication_error() {
        let mut rng = rng();
        let batch = encrypt_batch(&[3u8; 32], b"secret", "b", "ecg", &mut rng).unwrap();
        assert!(matches!(
            decrypt_batch(&[4u8; 32], &batch),
            Err(AccessError::Authentication(_))
        ));
    }

    #[test]
    fn test_repeat_encryptions_differ_in_nonce_and_ciphertext() {
        let mut rng = rng();
        let key = [6u8; 32];
        let a = encrypt_batch(&key, b"same plaintext", "b", "ecg", &mut rng).unwrap();
        let b = encrypt_batch(&key, b"same plaintext", "b", "ecg", &mut rng).unwrap();
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.ciphertext, b.ciphertext);
        assert_eq!(a.plaintext_digest, b.plaintext_digest);
    }

    #[test]
    fn test_empty_plaintext_is_rejected() {
        let mut rng = rng();
        assert!(matches!(
            encrypt_batch(&[0u8; 32], b"", "b", "ecg", &mut rng),
            Err(AccessError::InvalidParameter(_))
        ));
    }

    #[test]
    fn test_explicit_nonce_is_deterministic() {
        let key = [8u8; 32];
        let a = encrypt_batch_with_nonce(&key, b"msg", "b", "t", [9u8; 16]).unwrap();
        let b = encrypt_batch_with_nonce(&key, b"msg", "b", "t", [9u8; 16]).unwrap();
        assert_eq!(a, b);
    }
}
