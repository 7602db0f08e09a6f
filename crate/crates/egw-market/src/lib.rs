//! The six-step data-trade protocol as an explicit state machine:
//! device registration, batch listing, deal request with deposit escrow,
//! confirmation, KEM key delivery, and finalization or dispute.
//!
//! Every accepted operation appends exactly one transaction block to the
//! market's ledger chain, and the whole market state can be reconstructed
//! from that chain alone ([`Market::replay`]).
//!
//! Operations are serialized through one `&mut Market` writer; queries are
//! immutable snapshots. Simulated participants interleave through the
//! deterministic scenario runner in [`scenario`].

mod escrow;
mod market;
pub mod scenario;
mod types;

pub use escrow::Bank;
pub use market::{Market, MarketState, SettlementAction};
pub use types::{
    BatchListing, BatchMetadata, Deal, DealState, DeviceRegistration, DisputeOutcome,
    MarketEvent, PriceConditions,
};

use egw_access::AccessError;
use egw_canon::CanonError;
use egw_ledger::LedgerError;

#[derive(Debug, thiserror::Error)]
pub enum MarketError {
    #[error("duplicate: {0}")]
    Duplicate(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("malformed keys: {0}")]
    MalformedKeys(String),
    #[error("insufficient balance: have {balance}, need {needed}")]
    InsufficientFunds { balance: u64, needed: u64 },
    #[error("deal {deal_id} is in state {from:?}, cannot {operation}")]
    Transition {
        deal_id: String,
        from: DealState,
        operation: &'static str,
    },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Canon(#[from] CanonError),
}
