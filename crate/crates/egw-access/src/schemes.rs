//! Pluggable KEM and signature schemes.
//!
//! Two instantiations of each interface:
//! * the post-quantum algorithms Kyber512 (KEM) and Dilithium2 (signatures);
//! * a built-in test-grade pair — a hashed Diffie–Hellman KEM and
//!   deterministic Schnorr signatures over the RFC 3526 2048-bit MODP group —
//!   that needs no OS entropy, so whole-system runs replay bit-exactly.

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use egw_canon::sha256_parts;

use crate::AccessError;

/// RFC 3526 group 14: a 2048-bit safe prime; the generator 2 has prime
/// order q = (p − 1) / 2.
const MODP_2048_HEX: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74",
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437",
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05",
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB",
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718",
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
);

const GROUP_BYTES: usize = 256;
const SCHNORR_S_BYTES: usize = 72;

fn group_p() -> &'static BigUint {
    static P: OnceLock<BigUint> = OnceLock::new();
    P.get_or_init(|| BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16).expect("valid prime hex"))
}

/// Order of the quadratic-residue subgroup: q = (p - 1) / 2.
#[cfg(test)]
fn group_q() -> &'static BigUint {
    static Q: OnceLock<BigUint> = OnceLock::new();
    Q.get_or_init(|| (group_p() - BigUint::one()) >> 1)
}

fn generator() -> BigUint {
    BigUint::from(2u32)
}

fn to_fixed_bytes(n: &BigUint, len: usize) -> Vec<u8> {
    let raw = n.to_bytes_be();
    assert!(raw.len() <= len, "value wider than {len} bytes");
    let mut out = vec![0u8; len - raw.len()];
    out.extend(raw);
    out
}

/// Scalar from 32 hash bytes, forced nonzero.
fn scalar_from(bytes: &[u8; 32]) -> BigUint {
    let s = BigUint::from_bytes_be(bytes);
    if s.is_zero() {
        BigUint::one()
    } else {
        s
    }
}

fn check_group_element(bytes: &[u8], what: &str) -> Result<BigUint, AccessError> {
    if bytes.len() != GROUP_BYTES {
        return Err(AccessError::Kem(format!(
            "{what} must be {GROUP_BYTES} bytes, got {}",
            bytes.len()
        )));
    }
    let v = BigUint::from_bytes_be(bytes);
    let two = BigUint::from(2u32);
    if v < two || v > group_p() - &two {
        return Err(AccessError::Kem(format!("{what} is outside the group range")));
    }
    Ok(v)
}

/// Modular inverse in Z_p via the extended Euclidean algorithm.
fn mod_inverse(a: &BigUint, p: &BigUint) -> BigUint {
    let gcd = BigInt::from(a.clone()).extended_gcd(&BigInt::from(p.clone()));
    let mut x = gcd.x % BigInt::from(p.clone());
    if x.is_negative() {
        x += BigInt::from(p.clone());
    }
    x.to_biguint().expect("non-negative after reduction")
}

// --- KEM interface ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemKeyPair {
    pub algorithm: &'static str,
    pub public_key: Vec<u8>,
    secret_key: Vec<u8>,
}

pub struct Encapsulation {
    pub ciphertext: Vec<u8>,
    pub shared_secret: [u8; 32],
}

pub trait KemScheme {
    fn algorithm_id(&self) -> &'static str;
    /// Deterministic for seed-drivable schemes.
    fn generate(&self, seed: &[u8; 32]) -> Result<KemKeyPair, AccessError>;
    fn encapsulate(&self, public_key: &[u8], seed: &[u8; 32])
        -> Result<Encapsulation, AccessError>;
    fn decapsulate(&self, keypair: &KemKeyPair, ciphertext: &[u8])
        -> Result<[u8; 32], AccessError>;
}

/// Hashed Diffie–Hellman KEM over the MODP group. Fully deterministic from
/// seeds; 256-byte public keys and ciphertexts; 32-byte shared secrets.
pub struct BuiltinKem;

impl BuiltinKem {
    fn shared(&self, raw: &BigUint, ciphertext: &[u8], public_key: &[u8]) -> [u8; 32] {
        sha256_parts(&[
            b"egw/kem-ss/v1",
            &to_fixed_bytes(raw, GROUP_BYTES),
            ciphertext,
            public_key,
        ])
        .0
    }
}

impl KemScheme for BuiltinKem {
    fn algorithm_id(&self) -> &'static str {
        "builtin-dh-kem"
    }

    fn generate(&self, seed: &[u8; 32]) -> Result<KemKeyPair, AccessError> {
        let x_bytes = sha256_parts(&[b"egw/kem-x/v1", seed]).0;
        let x = scalar_from(&x_bytes);
        let public = generator().modpow(&x, group_p());
        Ok(KemKeyPair {
            algorithm: self.algorithm_id(),
            public_key: to_fixed_bytes(&public, GROUP_BYTES),
            secret_key: x_bytes.to_vec(),
        })
    }

    fn encapsulate(
        &self,
        public_key: &[u8],
        seed: &[u8; 32],
    ) -> Result<Encapsulation, AccessError> {
        let pk = check_group_element(public_key, "public key")?;
        let y_bytes = sha256_parts(&[b"egw/kem-y/v1", seed, public_key]).0;
        let y = scalar_from(&y_bytes);
        let ct_value = generator().modpow(&y, group_p());
        let ciphertext = to_fixed_bytes(&ct_value, GROUP_BYTES);
        let raw = pk.modpow(&y, group_p());
        let shared_secret = self.shared(&raw, &ciphertext, public_key);
        Ok(Encapsulation { ciphertext, shared_secret })
    }

    fn decapsulate(
        &self,
        keypair: &KemKeyPair,
        ciphertext: &[u8],
    ) -> Result<[u8; 32], AccessError> {
        if keypair.algorithm != self.algorithm_id() {
            return Err(AccessError::InvalidParameter(format!(
                "keypair algorithm {} does not match {}",
                keypair.algorithm,
                self.algorithm_id()
            )));
        }
        let ct = check_group_element(ciphertext, "ciphertext")?;
        let x_bytes: [u8; 32] = keypair
            .secret_key
            .as_slice()
            .try_into()
            .map_err(|_| AccessError::Kem("secret key must be 32 bytes".into()))?;
        let x = scalar_from(&x_bytes);
        let raw = ct.modpow(&x, group_p());
        Ok(self.shared(&raw, ciphertext, &keypair.public_key))
    }
}

/// The post-quantum KEM named by the source description.
pub struct Kyber512Kem;

impl KemScheme for Kyber512Kem {
    fn algorithm_id(&self) -> &'static str {
        "kyber512"
    }

    fn generate(&self, seed: &[u8; 32]) -> Result<KemKeyPair, AccessError> {
        let mut rng = ChaCha12Rng::from_seed(*seed);
        let keys = pqc_kyber::keypair(&mut rng)
            .map_err(|e| AccessError::Kem(format!("kyber keypair: {e}")))?;
        Ok(KemKeyPair {
            algorithm: self.algorithm_id(),
            public_key: keys.public.to_vec(),
            secret_key: keys.secret.to_vec(),
        })
    }

    fn encapsulate(
        &self,
        public_key: &[u8],
        seed: &[u8; 32],
    ) -> Result<Encapsulation, AccessError> {
        let mut rng = ChaCha12Rng::from_seed(*seed);
        let (ciphertext, shared_secret) = pqc_kyber::encapsulate(public_key, &mut rng)
            .map_err(|e| AccessError::Kem(format!("kyber encapsulate: {e}")))?;
        Ok(Encapsulation { ciphertext: ciphertext.to_vec(), shared_secret })
    }

    fn decapsulate(
        &self,
        keypair: &KemKeyPair,
        ciphertext: &[u8],
    ) -> Result<[u8; 32], AccessError> {
        if keypair.algorithm != self.algorithm_id() {
            return Err(AccessError::InvalidParameter(format!(
                "keypair algorithm {} does not match {}",
                keypair.algorithm,
                self.algorithm_id()
            )));
        }
        pqc_kyber::decapsulate(ciphertext, &keypair.secret_key)
            .map_err(|e| AccessError::Kem(format!("kyber decapsulate: {e}")))
    }
}

// --- Signature interface ----------------------------------------------------------

#[derive(Clone, PartialEq)]
enum SigningSecret {
    /// 32-byte scalar seed for the built-in Schnorr scheme.
    Bytes([u8; 32]),
    /// Dilithium secret keys only exist inside the library keypair object.
    Dilithium(Box<pqc_dilithium::Keypair>),
}

impl std::fmt::Debug for SigningSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SigningSecret(<elided>)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureKeyPair {
    pub algorithm: &'static str,
    pub verification_key: Vec<u8>,
    secret: SigningSecret,
}

pub trait SignatureScheme {
    fn algorithm_id(&self) -> &'static str;
    /// Deterministic for seed-drivable schemes; Dilithium2 draws operating
    /// system entropy and ignores the seed.
    fn generate(&self, seed: &[u8; 32]) -> Result<SignatureKeyPair, AccessError>;
    fn sign(&self, keypair: &SignatureKeyPair, message: &[u8]) -> Result<Vec<u8>, AccessError>;
    fn verify(&self, verification_key: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

/// Deterministic Schnorr signatures over the MODP group with hash-derived
/// nonces. Signature = s (72 bytes) ‖ e (32 bytes).
pub struct BuiltinSignature;

impl BuiltinSignature {
    fn challenge(r: &BigUint, verification_key: &[u8], message: &[u8]) -> BigUint {
        let e_bytes = sha256_parts(&[
            b"egw/schnorr-e/v1",
            &to_fixed_bytes(r, GROUP_BYTES),
            verification_key,
            message,
        ])
        .0;
        BigUint::from_bytes_be(&e_bytes)
    }
}

impl SignatureScheme for BuiltinSignature {
    fn algorithm_id(&self) -> &'static str {
        "builtin-schnorr"
    }

    fn generate(&self, seed: &[u8; 32]) -> Result<SignatureKeyPair, AccessError> {
        let x_bytes = sha256_parts(&[b"egw/schnorr-x/v1", seed]).0;
        let x = scalar_from(&x_bytes);
        let vk = generator().modpow(&x, group_p());
        Ok(SignatureKeyPair {
            algorithm: self.algorithm_id(),
            verification_key: to_fixed_bytes(&vk, GROUP_BYTES),
            secret: SigningSecret::Bytes(x_bytes),
        })
    }

    fn sign(&self, keypair: &SignatureKeyPair, message: &[u8]) -> Result<Vec<u8>, AccessError> {
        let SigningSecret::Bytes(x_bytes) = &keypair.secret else {
            return Err(AccessError::InvalidParameter(
                "keypair does not belong to the built-in signature scheme".into(),
            ));
        };
        let x = scalar_from(x_bytes);
        let k_bytes = sha256_parts(&[b"egw/schnorr-k/v1", x_bytes, message]).0;
        let k = scalar_from(&k_bytes);
        let r = generator().modpow(&k, group_p());
        let e = Self::challenge(&r, &keypair.verification_key, message);
        // s = k + e·x over the integers (≤ 513 bits); g has order q so the
        // verification equation holds without reduction.
        let s = &k + &e * &x;
        let mut signature = to_fixed_bytes(&s, SCHNORR_S_BYTES);
        signature.extend(to_fixed_bytes(&e, 32));
        Ok(signature)
    }

    fn verify(&self, verification_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        if signature.len() != SCHNORR_S_BYTES + 32 {
            return false;
        }
        let Ok(vk) = check_group_element(verification_key, "verification key") else {
            return false;
        };
        let s = BigUint::from_bytes_be(&signature[..SCHNORR_S_BYTES]);
        let e = BigUint::from_bytes_be(&signature[SCHNORR_S_BYTES..]);
        let p = group_p();
        // r' = g^s · (vk^e)^{-1} mod p
        let vk_e = vk.modpow(&e, p);
        let r = (generator().modpow(&s, p) * mod_inverse(&vk_e, p)) % p;
        Self::challenge(&r, verification_key, message) == e
    }
}

/// The post-quantum signature algorithm named by the source description.
pub struct Dilithium2Signature;

impl SignatureScheme for Dilithium2Signature {
    fn algorithm_id(&self) -> &'static str {
        "dilithium2"
    }

    fn generate(&self, _seed: &[u8; 32]) -> Result<SignatureKeyPair, AccessError> {
        // The library draws fresh OS entropy; the seed cannot be injected.
        let keys = pqc_dilithium::Keypair::generate();
        Ok(SignatureKeyPair {
            algorithm: self.algorithm_id(),
            verification_key: keys.public.to_vec(),
            secret: SigningSecret::Dilithium(Box::new(keys)),
        })
    }

    fn sign(&self, keypair: &SignatureKeyPair, message: &[u8]) -> Result<Vec<u8>, AccessError> {
        let SigningSecret::Dilithium(keys) = &keypair.secret else {
            return Err(AccessError::InvalidParameter(
                "keypair does not belong to the dilithium2 scheme".into(),
            ));
        };
        Ok(keys.sign(message).to_vec())
    }

    fn verify(&self, verification_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        pqc_dilithium::verify(signature, message, verification_key).is_ok()
    }
}
