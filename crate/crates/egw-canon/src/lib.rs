//! Canonical byte encodings for everything the gateway stack hashes or signs.
//!
//! Every digest and signature in the workspace is computed over the same wire
//! form: UTF-8 JSON with object keys sorted, no insignificant whitespace,
//! integers in plain decimal, and byte strings as lowercase hex. Floats are
//! rejected inside signed/hashed structures so that two peers can never
//! disagree on a digest because of float formatting.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CanonError {
    #[error("value cannot be represented as JSON: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("floats are not permitted in canonical structures (at {path})")]
    FloatNotAllowed { path: String },
}

// --- 32-byte digests ---------------------------------------------------------

/// A SHA-256 digest. Serializes as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0u8; 32]);

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let bytes = hex::decode(s)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| hex::FromHexError::InvalidStringLength)?;
        Ok(Hash32(arr))
    }
}

impl std::fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Hash32({})", self.to_hex())
    }
}

impl std::fmt::Display for Hash32 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Hash32::from_hex(&s).map_err(|e| D::Error::custom(format!("bad hash hex: {e}")))
    }
}

/// Arbitrary bytes that travel as lowercase hex inside JSON structures.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HexBytes(pub Vec<u8>);

impl HexBytes {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u8>> for HexBytes {
    fn from(v: Vec<u8>) -> Self {
        HexBytes(v)
    }
}

impl From<&[u8]> for HexBytes {
    fn from(v: &[u8]) -> Self {
        HexBytes(v.to_vec())
    }
}

impl std::fmt::Debug for HexBytes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HexBytes({} bytes)", self.0.len())
    }
}

impl Serialize for HexBytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for HexBytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(&s)
            .map(HexBytes)
            .map_err(|e| D::Error::custom(format!("bad hex: {e}")))
    }
}

// --- hashing -----------------------------------------------------------------

pub fn sha256(bytes: &[u8]) -> Hash32 {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    Hash32(hasher.finalize().into())
}

/// Digest of several parts hashed in order, used for domain-separated
/// derivations (`sha256_parts(&[b"domain", key, index])`).
pub fn sha256_parts(parts: &[&[u8]]) -> Hash32 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    Hash32(hasher.finalize().into())
}

// --- canonical JSON ----------------------------------------------------------

/// Encodes `value` in the canonical wire form.
///
/// serde_json's default map type keeps keys in sorted order and its compact
/// writer emits no whitespace, so after the float check the plain encoder is
/// already canonical.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CanonError> {
    let tree = serde_json::to_value(value)?;
    reject_floats(&tree, "$")?;
    Ok(serde_json::to_vec(&tree)?)
}

/// SHA-256 of the canonical encoding; the digest used for signing and chain
/// linkage throughout the workspace.
pub fn digest_canonical<T: Serialize>(value: &T) -> Result<Hash32, CanonError> {
    Ok(sha256(&canonical_json(value)?))
}

fn reject_floats(value: &serde_json::Value, path: &str) -> Result<(), CanonError> {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                Ok(())
            } else {
                Err(CanonError::FloatNotAllowed { path: path.to_string() })
            }
        }
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                reject_floats(item, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                reject_floats(v, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Zyx {
        zeta: u32,
        alpha: &'static str,
        mid: Vec<u8>,
    }

    #[test]
    fn test_sha256_known_answer() {
        // FIPS 180-2 test vector for "abc".
        assert_eq!(
            sha256(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn test_canonical_json_sorts_keys_and_strips_whitespace() {
        let v = Zyx { zeta: 7, alpha: "a", mid: vec![1, 2] };
        let bytes = canonical_json(&v).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"{"alpha":"a","mid":[1,2],"zeta":7}"#
        );
    }

    #[test]
    fn test_canonical_json_rejects_floats() {
        let err = canonical_json(&serde_json::json!({"x": 1.5})).unwrap_err();
        assert!(matches!(err, CanonError::FloatNotAllowed { .. }));
        // Integral-valued floats are still floats.
        let err = canonical_json(&serde_json::json!({"deep": [{"y": 2.0}]})).unwrap_err();
        match err {
            CanonError::FloatNotAllowed { path } => assert_eq!(path, "$.deep[0].y"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn test_digest_ignores_declaration_order() {
        #[derive(Serialize)]
        struct A {
            left: u8,
            right: u8,
        }
        #[derive(Serialize)]
        struct B {
            right: u8,
            left: u8,
        }
        let a = digest_canonical(&A { left: 1, right: 2 }).unwrap();
        let b = digest_canonical(&B { right: 2, left: 1 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn test_hash32_hex_roundtrip() {
        let h = sha256(b"roundtrip");
        let back = Hash32::from_hex(&h.to_hex()).unwrap();
        assert_eq!(h, back);
        assert!(Hash32::from_hex("abcd").is_err());
        assert!(Hash32::ZERO.is_zero());
        assert!(!h.is_zero());
    }

    #[test]
    fn test_hexbytes_serde_roundtrip() {
        let b = HexBytes(vec![0, 1, 254, 255]);
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, "\"0001feff\"");
        let back: HexBytes = serde_json::from_str(&json).unwrap();
        assert_eq!(b, back);
        assert!(serde_json::from_str::<HexBytes>("\"xyz\"").is_err());
    }

    #[test]
    fn test_sha256_parts_matches_concatenation() {
        let whole = sha256(b"edge-gateway/child/1");
        let parts = sha256_parts(&[b"edge-", b"gateway", b"/child/1"]);
        assert_eq!(whole, parts);
    }
}
