//! Hash-chained block ledger with sidechain metadata, stake-weighted
//! proposer selection, and gossip dissemination over a deterministic
//! simulated network.
//!
//! The chain is single-writer, multi-reader: appends go through
//! [`Chain::append`] one at a time, reads borrow immutably. The network
//! simulator is single-threaded with a deterministic event order, so every
//! run is bit-reproducible from (topology, seed).

mod chain;
mod gossip;
mod pos;
mod sidechain;

pub use chain::{make_block, Block, BlockHeader, Chain};
pub use gossip::{gossip_broadcast, Delivery, DeliveryReport, ScenarioConfig, SimNet, Topology};
pub use pos::{select_proposer, simulate_pos_rounds, PosSimReport, Validator};
pub use sidechain::{SideChainEntry, SideChainMetadata, SideChainStore};

use egw_canon::CanonError;

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    /// A block timestamp went backwards relative to its parent.
    #[error("timestamp {got} regresses behind parent timestamp {parent}")]
    Ordering { got: u64, parent: u64 },
    /// An appended block does not extend the current tip.
    #[error("block does not link to the tip at height {height}: {reason}")]
    LinkMismatch { height: u64, reason: String },
    /// Chain verification found an inconsistency; `height` is the first
    /// block at which the walk fails.
    #[error("chain invalid at height {height}: {reason}")]
    Tamper { height: u64, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("duplicate entry: {0}")]
    Duplicate(String),
    #[error("not found: {0}")]
    NotFound(String),
    /// A chain dump or scenario file could not be parsed.
    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Canon(#[from] CanonError),
}
