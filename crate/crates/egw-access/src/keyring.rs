//! Hash-derived key hierarchy: one master secret per gateway, a derived
//! private seed for signing-key generation, and one child key per data batch.

use egw_canon::sha256_parts;

const CHILD_LABEL: &[u8] = b"egw/child-key/v1";
const DERIVED_LABEL: &[u8] = b"egw/derived-private/v1";
const SIGNING_LABEL: &[u8] = b"egw/signing-seed/v1";
const KEM_LABEL: &[u8] = b"egw/kem-seed/v1";

/// Deterministic, domain-separated child-key derivation.
pub fn derive_child_key(master: &[u8; 32], batch_index: u64) -> [u8; 32] {
    sha256_parts(&[CHILD_LABEL, master, &batch_index.to_be_bytes()]).0
}

/// Immutable key hierarchy rooted in a 32-byte master secret. The derived
/// private seed is used only to seed asymmetric keypairs (the role the source
/// description leaves open); child keys encrypt one data batch each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRing {
    master_secret: [u8; 32],
    derived_private: [u8; 32],
}

impl KeyRing {
    pub fn new(master_secret: [u8; 32]) -> Self {
        let derived_private = sha256_parts(&[DERIVED_LABEL, &master_secret]).0;
        KeyRing { master_secret, derived_private }
    }

    /// Derive the ring from any seed material (hashed down to 32 bytes).
    pub fn from_seed_material(material: &[u8]) -> Self {
        KeyRing::new(sha256_parts(&[b"egw/master-secret/v1", material]).0)
    }

    pub fn derived_private(&self) -> &[u8; 32] {
        &self.derived_private
    }

    /// Child key for one batch index; deterministic and collision-free
    /// across indices for a fixed master.
    pub fn child_key(&self, batch_index: u64) -> [u8; 32] {
        derive_child_key(&self.master_secret, batch_index)
    }

    /// Seed for the gateway's signature keypair.
    pub fn signing_seed(&self) -> [u8; 32] {
        sha256_parts(&[SIGNING_LABEL, &self.derived_private]).0
    }

    /// Seed for the gateway's KEM keypair.
    pub fn kem_seed(&self) -> [u8; 32] {
        sha256_parts(&[KEM_LABEL, &self.derived_private]).0
    }
}
