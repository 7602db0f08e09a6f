//! Domain types and the event vocabulary of the trade protocol.

use egw_access::KeyEnvelope;
use egw_canon::{Hash32, HexBytes};
use serde::{Deserialize, Serialize};

/// A device (or gateway acting as one) registered to the trading network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRegistration {
    pub device_id: String,
    pub owner_id: String,
    pub verification_key: HexBytes,
    pub kem_public_key: HexBytes,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub data_type: String,
    pub size: u64,
    pub created_at: u64,
}

/// Terms a deposit has to meet before a deal on this batch is confirmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceConditions {
    pub min_deposit: u64,
    pub data_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchListing {
    pub batch_id: String,
    pub owner_id: String,
    pub metadata: BatchMetadata,
    pub payload_digest: Hash32,
    pub price_conditions: PriceConditions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealState {
    Requested,
    Confirmed,
    KeyDelivered,
    Finalized,
    Disputed,
    Refunded,
}

impl DealState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, DealState::Finalized | DealState::Refunded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deal {
    pub deal_id: String,
    pub batch_id: String,
    pub buyer_id: String,
    pub deposit: u64,
    pub state: DealState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisputeOutcome {
    Refunded,
    Finalized,
}

/// One ledger transaction per accepted operation. Replaying these events in
/// order reconstructs the full market state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MarketEvent {
    Genesis {
        balances: Vec<(String, u64)>,
        timestamp: u64,
    },
    DeviceRegistered {
        registration: DeviceRegistration,
    },
    /// Only the listing (hash + metadata) goes on-ledger; the encrypted
    /// payload itself stays with the storage provider.
    BatchListed {
        listing: BatchListing,
    },
    DealRequested {
        deal_id: String,
        batch_id: String,
        buyer_id: String,
        deposit: u64,
        timestamp: u64,
    },
    DealConfirmed {
        deal_id: String,
        timestamp: u64,
    },
    /// Deposit below the batch's terms, returned by the settlement pass.
    DealRefundedUnderTerms {
        deal_id: String,
        timestamp: u64,
    },
    KeyDelivered {
        deal_id: String,
        envelope: KeyEnvelope,
        timestamp: u64,
    },
    DealFinalized {
        deal_id: String,
        seller_id: String,
        amount: u64,
        timestamp: u64,
    },
    DealDisputed {
        deal_id: String,
        timestamp: u64,
    },
    DisputeResolved {
        deal_id: String,
        outcome: DisputeOutcome,
        timestamp: u64,
    },
}

impl MarketEvent {
    /// Short tag used in trace summaries.
    pub fn kind(&self) -> &'static str {
        match self {
            MarketEvent::Genesis { .. } => "genesis",
            MarketEvent::DeviceRegistered { .. } => "device_registered",
            MarketEvent::BatchListed { .. } => "batch_listed",
            MarketEvent::DealRequested { .. } => "deal_requested",
            MarketEvent::DealConfirmed { .. } => "deal_confirmed",
            MarketEvent::DealRefundedUnderTerms { .. } => "deal_refunded_under_terms",
            MarketEvent::KeyDelivered { .. } => "key_delivered",
            MarketEvent::DealFinalized { .. } => "deal_finalized",
            MarketEvent::DealDisputed { .. } => "deal_disputed",
            MarketEvent::DisputeResolved { .. } => "dispute_resolved",
        }
    }
}
