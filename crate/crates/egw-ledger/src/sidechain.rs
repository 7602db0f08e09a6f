//! Local sidechain records: block hashes plus metadata, never payloads.
//! Complete blocks live with storage providers; a gateway keeps only enough
//! here to prove what it stored and find it again.

use std::collections::BTreeMap;

use egw_canon::Hash32;
use serde::{Deserialize, Serialize};

use crate::LedgerError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideChainMetadata {
    pub batch_id: String,
    pub data_type: String,
    pub size: u64,
    pub owner_id: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideChainEntry {
    pub block_hash: Hash32,
    pub metadata: SideChainMetadata,
}

/// One entry per stored block, keyed by block hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SideChainStore {
    entries: BTreeMap<Hash32, SideChainEntry>,
}

impl SideChainStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record(&mut self, entry: SideChainEntry) -> Result<(), LedgerError> {
        if self.entries.contains_key(&entry.block_hash) {
            return Err(LedgerError::Duplicate(format!(
                "sidechain entry for block {}",
                entry.block_hash
            )));
        }
        self.entries.insert(entry.block_hash, entry);
        Ok(())
    }

    pub fn get(&self, block_hash: &Hash32) -> Result<&SideChainEntry, LedgerError> {
        self.entries
            .get(block_hash)
            .ok_or_else(|| LedgerError::NotFound(format!("sidechain entry for block {block_hash}")))
    }

    /// All entries recorded for a batch, in block-hash order.
    pub fn by_batch(&self, batch_id: &str) -> Vec<&SideChainEntry> {
        self.entries.values().filter(|e| e.metadata.batch_id == batch_id).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SideChainEntry> {
        self.entries.values()
    }
}
