//! Block structure, linkage rules and chain verification.

use egw_canon::{digest_canonical, sha256, Hash32, HexBytes};
use serde::{Deserialize, Serialize};

use crate::LedgerError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub prev_hash: Hash32,
    pub timestamp_ms: u64,
    pub data_type: String,
    pub payload_digest: Hash32,
    pub height: u64,
}

impl BlockHeader {
    /// The block hash: SHA-256 over the canonical header serialization.
    pub fn hash(&self) -> Hash32 {
        digest_canonical(self).expect("header has no floats")
    }
}

/// A header plus the encrypted body it commits to via `payload_digest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub body: HexBytes,
}

impl Block {
    pub fn hash(&self) -> Hash32 {
        self.header.hash()
    }
}

/// Build the next block on `prev` (or the genesis block when `prev` is
/// `None`). Genesis carries an all-zero `prev_hash` and height 0.
pub fn make_block(
    prev: Option<&BlockHeader>,
    body: &[u8],
    data_type: &str,
    timestamp_ms: u64,
) -> Result<Block, LedgerError> {
    let (prev_hash, height) = match prev {
        None => (Hash32::ZERO, 0),
        Some(parent) => {
            if timestamp_ms < parent.timestamp_ms {
                return Err(LedgerError::Ordering {
                    got: timestamp_ms,
                    parent: parent.timestamp_ms,
                });
            }
            (parent.hash(), parent.height + 1)
        }
    };
    Ok(Block {
        header: BlockHeader {
            prev_hash,
            timestamp_ms,
            data_type: data_type.to_string(),
            payload_digest: sha256(body),
            height,
        },
        body: HexBytes(body.to_vec()),
    })
}

/// An append-only chain of linked blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new() -> Self {
        Chain { blocks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Hash of the tip header, the value a peer would pin to identify this
    /// chain state.
    pub fn tip_hash(&self) -> Option<Hash32> {
        self.tip().map(Block::hash)
    }

    /// Append `block` if it extends the current tip. The body digest is
    /// checked here too, so a malformed block never enters the chain.
    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        let height = block.header.height;
        if sha256(&block.body.0) != block.header.payload_digest {
            return Err(LedgerError::Tamper {
                height,
                reason: "payload digest does not match body".into(),
            });
        }
        match self.tip() {
            None => {
                if !block.header.prev_hash.is_zero() || height != 0 {
                    return Err(LedgerError::LinkMismatch {
                        height,
                        reason: "first block must be genesis (zero prev_hash, height 0)".into(),
                    });
                }
            }
            Some(tip) => {
                if block.header.prev_hash != tip.hash() {
                    return Err(LedgerError::LinkMismatch {
                        height,
                        reason: format!(
                            "prev_hash does not match tip at height {}",
                            tip.header.height
                        ),
                    });
                }
                if height != tip.header.height + 1 {
                    return Err(LedgerError::LinkMismatch {
                        height,
                        reason: format!("expected height {}", tip.header.height + 1),
                    });
                }
                if block.header.timestamp_ms < tip.header.timestamp_ms {
                    return Err(LedgerError::Ordering {
                        got: block.header.timestamp_ms,
                        parent: tip.header.timestamp_ms,
                    });
                }
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Walk genesis→tip recomputing links and digests; on failure report the
    /// first bad height.
    pub fn verify(&self) -> Result<(), LedgerError> {
        let tamper = |height: u64, reason: &str| LedgerError::Tamper {
            height,
            reason: reason.to_string(),
        };
        for (i, block) in self.blocks.iter().enumerate() {
            let h = i as u64;
            if block.header.height != h {
                return Err(tamper(h, "height does not match chain position"));
            }
            match i.checked_sub(1).map(|p| &self.blocks[p]) {
                None => {
                    if !block.header.prev_hash.is_zero() {
                        return Err(tamper(h, "genesis prev_hash is not zero"));
                    }
                }
                Some(parent) => {
                    if block.header.prev_hash != parent.hash() {
                        return Err(tamper(h, "prev_hash does not match parent"));
                    }
                    if block.header.timestamp_ms < parent.header.timestamp_ms {
                        return Err(tamper(h, "timestamp regresses behind parent"));
                    }
                }
            }
            if sha256(&block.body.0) != block.header.payload_digest {
                return Err(tamper(h, "payload digest does not match body"));
            }
        }
        Ok(())
    }

    /// [`Chain::verify`] plus a comparison against an externally pinned tip
    /// hash, which catches mutations of the tip header itself.
    pub fn verify_with_tip(&self, expected_tip: &Hash32) -> Result<(), LedgerError> {
        self.verify()?;
        match self.tip() {
            Some(tip) if tip.hash() == *expected_tip => Ok(()),
            Some(tip) => Err(LedgerError::Tamper {
                height: tip.header.height,
                reason: "tip hash does not match the pinned value".into(),
            }),
            None => Err(LedgerError::Tamper {
                height: 0,
                reason: "chain is empty".into(),
            }),
        }
    }

    /// Newline-delimited canonical JSON, one block per line.
    pub fn dump(&self) -> Result<String, LedgerError> {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&String::from_utf8(egw_canon::canonical_json(block)?).expect("utf8"));
            out.push('\n');
        }
        Ok(out)
    }

    /// Rebuild a chain from its dump, re-running every append check; the
    /// error carries the 1-based line number of the offending block.
    pub fn restore(text: &str) -> Result<Chain, LedgerError> {
        let mut chain = Chain::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let block: Block = serde_json::from_str(line).map_err(|e| LedgerError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            chain.append(block).map_err(|e| LedgerError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(chain)
    }
}
