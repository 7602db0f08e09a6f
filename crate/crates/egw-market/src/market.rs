//! The market as an event-sourced state machine over a ledger chain.

use std::collections::BTreeMap;

use egw_access::{
    deliver_key, KemScheme, KeyEnvelope, SignatureKeyPair, SignatureScheme, SignedKeyRequest,
};
use egw_canon::{canonical_json, sha256, Hash32};
use egw_ledger::{make_block, Chain, SideChainEntry, SideChainMetadata, SideChainStore};

use crate::types::{
    BatchListing, BatchMetadata, Deal, DealState, DeviceRegistration, DisputeOutcome,
    MarketEvent, PriceConditions,
};
use crate::{Bank, MarketError};

const BLOCK_DATA_TYPE: &str = "market";

/// Everything reconstructable from the transaction chain alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketState {
    registrations: BTreeMap<String, DeviceRegistration>,
    listings: BTreeMap<String, BatchListing>,
    sidechain: SideChainStore,
    deals: BTreeMap<String, Deal>,
    bank: Bank,
    envelopes: BTreeMap<String, KeyEnvelope>,
    next_deal: u64,
}

/// One outcome line from a settlement pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SettlementAction {
    Confirmed { deal_id: String },
    RefundedUnderTerms { deal_id: String },
    DisputeFinalized { deal_id: String },
    DisputeRefunded { deal_id: String },
    /// Payload unavailable from storage; the deal stays Disputed.
    DisputeStuck { deal_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    state: MarketState,
    chain: Chain,
    /// Simulated storage-provider role: encrypted payloads keyed by digest.
    /// Deliberately not event-sourced — only hash and metadata go on-ledger.
    storage: BTreeMap<Hash32, Vec<u8>>,
}

impl Market {
    /// Open a market with the given opening balances; writes the genesis
    /// transaction block.
    pub fn new(
        initial_balances: Vec<(String, u64)>,
        genesis_ts: u64,
    ) -> Result<Self, MarketError> {
        let mut market = Market {
            state: MarketState::default(),
            chain: Chain::new(),
            storage: BTreeMap::new(),
        };
        market.commit(MarketEvent::Genesis {
            balances: initial_balances,
            timestamp: genesis_ts,
        })?;
        Ok(market)
    }

    // --- queries --------------------------------------------------------

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> &MarketState {
        &self.state
    }

    pub fn registration(&self, device_id: &str) -> Option<&DeviceRegistration> {
        self.state.registrations.get(device_id)
    }

    pub fn listing(&self, batch_id: &str) -> Option<&BatchListing> {
        self.state.listings.get(batch_id)
    }

    /// Listings whose metadata matches `data_type`, in batch-id order.
    pub fn query_listings(&self, data_type: &str) -> Vec<&BatchListing> {
        self.state
            .listings
            .values()
            .filter(|l| l.metadata.data_type == data_type)
            .collect()
    }

    pub fn deal(&self, deal_id: &str) -> Option<&Deal> {
        self.state.deals.get(deal_id)
    }

    pub fn deals(&self) -> impl Iterator<Item = &Deal> {
        self.state.deals.values()
    }

    pub fn envelope(&self, deal_id: &str) -> Option<&KeyEnvelope> {
        self.state.envelopes.get(deal_id)
    }

    pub fn balance(&self, party: &str) -> u64 {
        self.state.bank.balance(party)
    }

    /// Total units across balances and escrow; constant for the market's
    /// whole life.
    pub fn total_units(&self) -> u64 {
        self.state.bank.total()
    }

    pub fn sidechain(&self) -> &SideChainStore {
        &self.state.sidechain
    }

    pub fn stored_payload(&self, digest: &Hash32) -> Option<&[u8]> {
        self.storage.get(digest).map(Vec::as_slice)
    }

    /// The transaction events in chain order.
    pub fn events(&self) -> Result<Vec<MarketEvent>, MarketError> {
        self.chain
            .blocks()
            .iter()
            .map(|b| {
                serde_json::from_slice(&b.body.0)
                    .map_err(|e| MarketError::Integrity(format!("undecodable event: {e}")))
            })
            .collect()
    }

    /// Newline-delimited canonical JSON, one event per accepted operation.
    pub fn trace(&self) -> Result<String, MarketError> {
        let mut out = String::new();
        for block in self.chain.blocks() {
            out.push_str(
                std::str::from_utf8(&block.body.0)
                    .map_err(|e| MarketError::Integrity(format!("non-utf8 event body: {e}")))?,
            );
            out.push('\n');
        }
        Ok(out)
    }

    // --- protocol operations ---------------------------------------------

    /// Step 1: register a device (or a gateway acting as a participant).
    pub fn register_device(&mut self, registration: DeviceRegistration) -> Result<(), MarketError> {
        if registration.verification_key.is_empty() || registration.kem_public_key.is_empty() {
            return Err(MarketError::MalformedKeys(format!(
                "registration for {} carries an empty key",
                registration.device_id
            )));
        }
        if self.state.registrations.contains_key(&registration.device_id) {
            return Err(MarketError::Duplicate(format!(
                "device {}",
                registration.device_id
            )));
        }
        self.commit(MarketEvent::DeviceRegistered { registration })
    }

    /// Step 3: hand the encrypted payload to storage and put the listing
    /// (hash + metadata + terms) on the ledger.
    pub fn list_batch(
        &mut self,
        owner_id: &str,
        batch_id: &str,
        encrypted_payload: &[u8],
        declared_digest: Hash32,
        data_type: &str,
        min_deposit: u64,
        now_ms: u64,
    ) -> Result<(), MarketError> {
        if !self.state.registrations.contains_key(owner_id) {
            return Err(MarketError::Unauthorized(format!(
                "owner {owner_id} is not registered"
            )));
        }
        if self.state.listings.contains_key(batch_id) {
            return Err(MarketError::Duplicate(format!("listing {batch_id}")));
        }
        let digest = sha256(encrypted_payload);
        if digest != declared_digest {
            return Err(MarketError::Integrity(format!(
                "declared digest {declared_digest} does not match payload digest {digest}"
            )));
        }
        let listing = BatchListing {
            batch_id: batch_id.to_string(),
            owner_id: owner_id.to_string(),
            metadata: BatchMetadata {
                data_type: data_type.to_string(),
                size: encrypted_payload.len() as u64,
                created_at: now_ms,
            },
            payload_digest: digest,
            price_conditions: PriceConditions {
                min_deposit,
                data_type: data_type.to_string(),
            },
        };
        self.commit(MarketEvent::BatchListed { listing })?;
        self.storage.insert(digest, encrypted_payload.to_vec());
        Ok(())
    }

    /// Step 4: a buyer requests a deal, moving the deposit into escrow.
    pub fn request_deal(
        &mut self,
        buyer_id: &str,
        batch_id: &str,
        deposit: u64,
        now_ms: u64,
    ) -> Result<String, MarketError> {
        if !self.state.registrations.contains_key(buyer_id) {
            return Err(MarketError::Unauthorized(format!(
                "buyer {buyer_id} is not registered"
            )));
        }
        if !self.state.listings.contains_key(batch_id) {
            return Err(MarketError::NotFound(format!("listing {batch_id}")));
        }
        let balance = self.state.bank.balance(buyer_id);
        if balance < deposit {
            return Err(MarketError::InsufficientFunds { balance, needed: deposit });
        }
        let deal_id = format!("deal-{:06}", self.state.next_deal);
        self.commit(MarketEvent::DealRequested {
            deal_id: deal_id.clone(),
            batch_id: batch_id.to_string(),
            buyer_id: buyer_id.to_string(),
            deposit,
            timestamp: now_ms,
        })?;
        Ok(deal_id)
    }

    /// Step 5 (first half): confirm a requested deal when its deposit meets
    /// the batch terms. Returns whether it confirmed; an under-deposit deal
    /// stays Requested until a settlement pass refunds it.
    pub fn confirm_deal(&mut self, deal_id: &str, now_ms: u64) -> Result<bool, MarketError> {
        let deal = self.deal_checked(deal_id, DealState::Requested, "confirm")?;
        let listing = &self.state.listings[&deal.batch_id];
        if deal.deposit < listing.price_conditions.min_deposit {
            return Ok(false);
        }
        self.commit(MarketEvent::DealConfirmed {
            deal_id: deal_id.to_string(),
            timestamp: now_ms,
        })?;
        Ok(true)
    }

    /// Step 5 (second half): produce the KEM envelope for a confirmed deal.
    /// All signature and freshness failures surface before any state change.
    #[allow(clippy::too_many_arguments)]
    pub fn deliver_deal_key(
        &mut self,
        deal_id: &str,
        signed_request: &SignedKeyRequest,
        sig_scheme: &dyn SignatureScheme,
        kem_scheme: &dyn KemScheme,
        seller_signer: &SignatureKeyPair,
        batch_key: &[u8; 32],
        encapsulation_seed: &[u8; 32],
        now_ms: u64,
    ) -> Result<KeyEnvelope, MarketError> {
        let deal = self.deal_checked(deal_id, DealState::Confirmed, "deliver key")?;
        let buyer = self
            .state
            .registrations
            .get(&deal.buyer_id)
            .ok_or_else(|| MarketError::NotFound(format!("registration {}", deal.buyer_id)))?;
        if signed_request.request.requester_id != deal.buyer_id
            || signed_request.request.batch_id != deal.batch_id
        {
            return Err(MarketError::Unauthorized(
                "request does not match the deal's buyer and batch".into(),
            ));
        }
        let envelope = deliver_key(
            sig_scheme,
            kem_scheme,
            signed_request,
            &buyer.verification_key.0,
            &buyer.kem_public_key.0,
            batch_key,
            seller_signer,
            now_ms,
            encapsulation_seed,
        )?;
        self.commit(MarketEvent::KeyDelivered {
            deal_id: deal_id.to_string(),
            envelope: envelope.clone(),
            timestamp: now_ms,
        })?;
        Ok(envelope)
    }

    /// Step 6: a satisfied buyer releases the deposit to the seller; an
    /// unsatisfied one opens a dispute.
    pub fn finalize(
        &mut self,
        deal_id: &str,
        buyer_satisfied: bool,
        now_ms: u64,
    ) -> Result<DealState, MarketError> {
        let deal = self.deal_checked(deal_id, DealState::KeyDelivered, "finalize")?;
        if buyer_satisfied {
            let seller_id = self.state.listings[&deal.batch_id].owner_id.clone();
            let amount = deal.deposit;
            self.commit(MarketEvent::DealFinalized {
                deal_id: deal_id.to_string(),
                seller_id,
                amount,
                timestamp: now_ms,
            })?;
            Ok(DealState::Finalized)
        } else {
            self.commit(MarketEvent::DealDisputed {
                deal_id: deal_id.to_string(),
                timestamp: now_ms,
            })?;
            Ok(DealState::Disputed)
        }
    }

    /// Step 6 (dispute): re-hash the stored payload against the listing
    /// digest; a mismatch refunds the buyer, a match pays the seller.
    pub fn resolve_dispute(
        &mut self,
        deal_id: &str,
        now_ms: u64,
    ) -> Result<DisputeOutcome, MarketError> {
        let deal = self.deal_checked(deal_id, DealState::Disputed, "resolve dispute")?;
        let listing = &self.state.listings[&deal.batch_id];
        let payload = self.storage.get(&listing.payload_digest).ok_or_else(|| {
            MarketError::Storage(format!(
                "payload {} unavailable from storage",
                listing.payload_digest
            ))
        })?;
        let outcome = if sha256(payload) == listing.payload_digest {
            DisputeOutcome::Finalized
        } else {
            DisputeOutcome::Refunded
        };
        self.commit(MarketEvent::DisputeResolved {
            deal_id: deal_id.to_string(),
            outcome,
            timestamp: now_ms,
        })?;
        Ok(outcome)
    }

    /// The periodic pass: confirm or refund every Requested deal and try to
    /// resolve every Disputed one. Runs in deterministic deal-id order.
    pub fn settlement_pass(&mut self, now_ms: u64) -> Result<Vec<SettlementAction>, MarketError> {
        let pending: Vec<(String, DealState)> = self
            .state
            .deals
            .values()
            .filter(|d| matches!(d.state, DealState::Requested | DealState::Disputed))
            .map(|d| (d.deal_id.clone(), d.state))
            .collect();
        let mut actions = Vec::new();
        for (deal_id, state) in pending {
            match state {
                DealState::Requested => {
                    if self.confirm_deal(&deal_id, now_ms)? {
                        actions.push(SettlementAction::Confirmed { deal_id });
                    } else {
                        self.commit(MarketEvent::DealRefundedUnderTerms {
                            deal_id: deal_id.clone(),
                            timestamp: now_ms,
                        })?;
                        actions.push(SettlementAction::RefundedUnderTerms { deal_id });
                    }
                }
                DealState::Disputed => match self.resolve_dispute(&deal_id, now_ms) {
                    Ok(DisputeOutcome::Finalized) => {
                        actions.push(SettlementAction::DisputeFinalized { deal_id });
                    }
                    Ok(DisputeOutcome::Refunded) => {
                        actions.push(SettlementAction::DisputeRefunded { deal_id });
                    }
                    Err(MarketError::Storage(_)) => {
                        actions.push(SettlementAction::DisputeStuck { deal_id });
                    }
                    Err(e) => return Err(e),
                },
                _ => unreachable!("filtered to Requested | Disputed"),
            }
        }
        Ok(actions)
    }

    /// Simulated storage fault: corrupt the stored payload for a digest.
    /// Subsequent dispute resolutions on it will refund the buyer.
    pub fn corrupt_stored_payload(&mut self, digest: &Hash32) -> Result<(), MarketError> {
        let payload = self
            .storage
            .get_mut(digest)
            .ok_or_else(|| MarketError::Storage(format!("payload {digest} not stored")))?;
        payload[0] ^= 0xFF;
        Ok(())
    }

    /// Simulated storage fault: drop the payload entirely; disputes on it
    /// stay Disputed until it reappears.
    pub fn drop_stored_payload(&mut self, digest: &Hash32) -> Result<(), MarketError> {
        self.storage
            .remove(digest)
            .map(|_| ())
            .ok_or_else(|| MarketError::Storage(format!("payload {digest} not stored")))
    }

    // --- event sourcing ---------------------------------------------------

    /// Rebuild a market from its transaction chain alone.
    pub fn replay(chain: &Chain) -> Result<Market, MarketError> {
        chain.verify()?;
        if chain.is_empty() {
            return Err(MarketError::Integrity("chain has no genesis block".into()));
        }
        let mut state = MarketState::default();
        for block in chain.blocks() {
            let event: MarketEvent = serde_json::from_slice(&block.body.0)
                .map_err(|e| MarketError::Integrity(format!("undecodable event: {e}")))?;
            if block.header.height == 0 && !matches!(event, MarketEvent::Genesis { .. }) {
                return Err(MarketError::Integrity("first block is not genesis".into()));
            }
            apply(&mut state, &event, block.hash())?;
        }
        Ok(Market {
            state,
            chain: chain.clone(),
            storage: BTreeMap::new(),
        })
    }

    fn commit(&mut self, event: MarketEvent) -> Result<(), MarketError> {
        let body = canonical_json(&event)?;
        let block = make_block(
            self.chain.tip().map(|b| &b.header),
            &body,
            BLOCK_DATA_TYPE,
            event_timestamp(&event),
        )?;
        let hash = block.hash();
        // Apply first against a scratch clone? Not needed: every validation
        // ran before `commit`, and `apply` only fails on events this market
        // could not have produced.
        apply(&mut self.state, &event, hash)?;
        self.chain.append(block)?;
        Ok(())
    }

    fn deal_checked(
        &self,
        deal_id: &str,
        expected: DealState,
        operation: &'static str,
    ) -> Result<&Deal, MarketError> {
        let deal = self
            .state
            .deals
            .get(deal_id)
            .ok_or_else(|| MarketError::NotFound(format!("deal {deal_id}")))?;
        if deal.state != expected {
            return Err(MarketError::Transition {
                deal_id: deal_id.to_string(),
                from: deal.state,
                operation,
            });
        }
        Ok(deal)
    }
}

fn event_timestamp(event: &MarketEvent) -> u64 {
    match event {
        MarketEvent::Genesis { timestamp, .. } => *timestamp,
        MarketEvent::DeviceRegistered { registration } => registration.registered_at,
        MarketEvent::BatchListed { listing } => listing.metadata.created_at,
        MarketEvent::DealRequested { timestamp, .. }
        | MarketEvent::DealConfirmed { timestamp, .. }
        | MarketEvent::DealRefundedUnderTerms { timestamp, .. }
        | MarketEvent::KeyDelivered { timestamp, .. }
        | MarketEvent::DealFinalized { timestamp, .. }
        | MarketEvent::DealDisputed { timestamp, .. }
        | MarketEvent::DisputeResolved { timestamp, .. } => *timestamp,
    }
}

/// Pure state mutation for one event, shared by the live path and replay.
/// Transition legality is re-checked so a tampered chain cannot replay.
fn apply(state: &mut MarketState, event: &MarketEvent, block_hash: Hash32) -> Result<(), MarketError> {
    let expect_state = |deal: &Deal, expected: DealState| -> Result<(), MarketError> {
        if deal.state != expected {
            return Err(MarketError::Integrity(format!(
                "event illegal for deal {} in state {:?}",
                deal.deal_id, deal.state
            )));
        }
        Ok(())
    };
    match event {
        MarketEvent::Genesis { balances, .. } => {
            state.bank = Bank::new(balances.iter().cloned());
        }
        MarketEvent::DeviceRegistered { registration } => {
            state
                .registrations
                .insert(registration.device_id.clone(), registration.clone());
        }
        MarketEvent::BatchListed { listing } => {
            state.listings.insert(listing.batch_id.clone(), listing.clone());
            state.sidechain.record(SideChainEntry {
                block_hash,
                metadata: SideChainMetadata {
                    batch_id: listing.batch_id.clone(),
                    data_type: listing.metadata.data_type.clone(),
                    size: listing.metadata.size,
                    owner_id: listing.owner_id.clone(),
                    timestamp_ms: listing.metadata.created_at,
                },
            })?;
        }
        MarketEvent::DealRequested { deal_id, batch_id, buyer_id, deposit, .. } => {
            state.bank.lock(buyer_id, deal_id, *deposit)?;
            state.deals.insert(
                deal_id.clone(),
                Deal {
                    deal_id: deal_id.clone(),
                    batch_id: batch_id.clone(),
                    buyer_id: buyer_id.clone(),
                    deposit: *deposit,
                    state: DealState::Requested,
                },
            );
            state.next_deal += 1;
        }
        MarketEvent::DealConfirmed { deal_id, .. } => {
            let deal = get_deal(state, deal_id)?;
            expect_state(deal, DealState::Requested)?;
            deal.state = DealState::Confirmed;
        }
        MarketEvent::DealRefundedUnderTerms { deal_id, .. } => {
            let deal = get_deal(state, deal_id)?;
            expect_state(deal, DealState::Requested)?;
            let buyer = deal.buyer_id.clone();
            deal.state = DealState::Refunded;
            state.bank.release(deal_id, &buyer)?;
        }
        MarketEvent::KeyDelivered { deal_id, envelope, .. } => {
            let deal = get_deal(state, deal_id)?;
            expect_state(deal, DealState::Confirmed)?;
            deal.state = DealState::KeyDelivered;
            state.envelopes.insert(deal_id.clone(), envelope.clone());
        }
        MarketEvent::DealFinalized { deal_id, seller_id, amount, .. } => {
            let deal = get_deal(state, deal_id)?;
            expect_state(deal, DealState::KeyDelivered)?;
            deal.state = DealState::Finalized;
            let released = state.bank.release(deal_id, seller_id)?;
            if released != *amount {
                return Err(MarketError::Integrity(format!(
                    "finalize for {deal_id} released {released}, event claims {amount}"
                )));
            }
        }
        MarketEvent::DealDisputed { deal_id, .. } => {
            let deal = get_deal(state, deal_id)?;
            expect_state(deal, DealState::KeyDelivered)?;
            deal.state = DealState::Disputed;
        }
        MarketEvent::DisputeResolved { deal_id, outcome, .. } => {
            let deal = get_deal(state, deal_id)?;
            expect_state(deal, DealState::Disputed)?;
            let buyer = deal.buyer_id.clone();
            let batch_id = deal.batch_id.clone();
            match outcome {
                DisputeOutcome::Refunded => {
                    deal.state = DealState::Refunded;
                    state.bank.release(deal_id, &buyer)?;
                }
                DisputeOutcome::Finalized => {
                    deal.state = DealState::Finalized;
                    let seller = state.listings[&batch_id].owner_id.clone();
                    state.bank.release(deal_id, &seller)?;
                }
            }
        }
    }
    Ok(())
}

fn get_deal<'a>(state: &'a mut MarketState, deal_id: &str) -> Result<&'a mut Deal, MarketError> {
    state
        .deals
        .get_mut(deal_id)
        .ok_or_else(|| MarketError::NotFound(format!("deal {deal_id}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::pooled_participant;
    use egw_access::{request_key, BuiltinKem, BuiltinSignature};
    use egw_canon::HexBytes;

    const T0: u64 = 1_000_000;

    struct Fixture {
        market: Market,
        batch_key: [u8; 32],
        payload: Vec<u8>,
    }

    /// Two registered participants ("p0" sells, "p1" buys with 100 units)
    /// and one listed ecg batch with min_deposit 10.
    fn fixture() -> Fixture {
        let mut market = Market::new(
            vec![("p0".into(), 50), ("p1".into(), 100)],
            T0,
        )
        .unwrap();
        for (i, id) in ["p0", "p1"].iter().enumerate() {
            let p = pooled_participant(id);
            market
                .register_device(DeviceRegistration {
                    device_id: p.id.clone(),
                    owner_id: p.id.clone(),
                    verification_key: HexBytes(p.signer.verification_key.clone()),
                    kem_public_key: HexBytes(p.kem.public_key.clone()),
                    registered_at: T0 + 1_000 * (i as u64 + 1),
                })
                .unwrap();
        }
        let batch_key = [7u8; 32];
        let encrypted = egw_access::encrypt_batch_with_nonce(
            &batch_key,
            b"patient ecg window, already processed",
            "batch-1",
            "ecg",
            [9u8; 16],
        )
        .unwrap();
        let payload = canonical_json(&encrypted).unwrap();
        market
            .list_batch("p0", "batch-1", &payload, sha256(&payload), "ecg", 10, T0 + 5_000)
            .unwrap();
        Fixture { market, batch_key, payload }
    }

    /// Drive the fixture's batch through request->confirm->deliver.
    fn delivered_deal(fix: &mut Fixture, deposit: u64) -> String {
        let deal_id = fix.market.request_deal("p1", "batch-1", deposit, T0 + 10_000).unwrap();
        assert!(fix.market.confirm_deal(&deal_id, T0 + 11_000).unwrap());
        let buyer = pooled_participant("p1");
        let seller = pooled_participant("p0");
        let request =
            request_key(&BuiltinSignature, &buyer.signer, "p1", "batch-1", T0 + 12_000).unwrap();
        fix.market
            .deliver_deal_key(
                &deal_id,
                &request,
                &BuiltinSignature,
                &BuiltinKem,
                &seller.signer,
                &fix.batch_key,
                &[3u8; 32],
                T0 + 12_500,
            )
            .unwrap();
        deal_id
    }

    #[test]
    fn test_registration_rules() {
        let mut fix = fixture();
        assert!(fix.market.registration("p0").is_some());
        // Same id twice is rejected.
        let p = pooled_participant("p0");
        let again = DeviceRegistration {
            device_id: "p0".into(),
            owner_id: "p0".into(),
            verification_key: HexBytes(p.signer.verification_key.clone()),
            kem_public_key: HexBytes(p.kem.public_key.clone()),
            registered_at: T0 + 9_000,
        };
        assert!(matches!(fix.market.register_device(again), Err(MarketError::Duplicate(_))));
        // Empty key material is malformed.
        let malformed = DeviceRegistration {
            device_id: "p9".into(),
            owner_id: "p9".into(),
            verification_key: HexBytes(vec![]),
            kem_public_key: HexBytes(p.kem.public_key.clone()),
            registered_at: T0 + 9_000,
        };
        assert!(matches!(
            fix.market.register_device(malformed),
            Err(MarketError::MalformedKeys(_))
        ));
        // An unregistered buyer cannot request a deal.
        assert!(matches!(
            fix.market.request_deal("ghost", "batch-1", 10, T0 + 9_500),
            Err(MarketError::Unauthorized(_))
        ));
    }

    #[test]
    fn test_listing_queries_and_integrity() {
        let mut fix = fixture();
        assert_eq!(fix.market.query_listings("ecg").len(), 1);
        assert!(fix.market.query_listings("temperature").is_empty());
        // The listing digest equals an independent hash of the stored bytes.
        let listing = fix.market.listing("batch-1").unwrap().clone();
        let stored = fix.market.stored_payload(&listing.payload_digest).unwrap();
        assert_eq!(sha256(stored), listing.payload_digest);
        assert_eq!(listing.metadata.size, fix.payload.len() as u64);
        // A declared digest that mismatches the payload is rejected.
        let err = fix
            .market
            .list_batch("p0", "batch-2", &fix.payload, sha256(b"other"), "ecg", 5, T0 + 6_000)
            .unwrap_err();
        assert!(matches!(err, MarketError::Integrity(_)));
        assert!(fix.market.listing("batch-2").is_none());
    }

    #[test]
    fn test_request_deal_escrow_arithmetic() {
        let mut fix = fixture();
        let deal_id = fix.market.request_deal("p1", "batch-1", 10, T0 + 10_000).unwrap();
        assert_eq!(fix.market.balance("p1"), 90);
        assert_eq!(fix.market.state().bank.locked_for(&deal_id), 10);
        assert_eq!(fix.market.total_units(), 150);
        assert_eq!(fix.market.deal(&deal_id).unwrap().state, DealState::Requested);
    }

    #[test]
    fn test_request_deal_rejections_leave_no_trace() {
        let mut fix = fixture();
        let blocks_before = fix.market.chain().len();
        assert!(matches!(
            fix.market.request_deal("p1", "batch-1", 101, T0 + 10_000),
            Err(MarketError::InsufficientFunds { balance: 100, needed: 101 })
        ));
        assert!(matches!(
            fix.market.request_deal("p1", "batch-9", 5, T0 + 10_000),
            Err(MarketError::NotFound(_))
        ));
        assert_eq!(fix.market.chain().len(), blocks_before);
        assert_eq!(fix.market.balance("p1"), 100);
    }

    #[test]
    fn test_confirm_boundary_is_inclusive() {
        let mut fix = fixture();
        let at_min = fix.market.request_deal("p1", "batch-1", 10, T0 + 10_000).unwrap();
        assert!(fix.market.confirm_deal(&at_min, T0 + 11_000).unwrap());
        assert_eq!(fix.market.deal(&at_min).unwrap().state, DealState::Confirmed);

        let below = fix.market.request_deal("p1", "batch-1", 9, T0 + 12_000).unwrap();
        assert!(!fix.market.confirm_deal(&below, T0 + 13_000).unwrap());
        assert_eq!(fix.market.deal(&below).unwrap().state, DealState::Requested);
    }

    #[test]
    fn test_confirm_wrong_state_is_transition_error() {
        let mut fix = fixture();
        let deal_id = delivered_deal(&mut fix, 10);
        fix.market.finalize(&deal_id, true, T0 + 20_000).unwrap();
        let err = fix.market.confirm_deal(&deal_id, T0 + 21_000).unwrap_err();
        assert!(matches!(
            err,
            MarketError::Transition { from: DealState::Finalized, .. }
        ));
    }

    #[test]
    fn test_deliver_before_confirm_is_transition_error() {
        let mut fix = fixture();
        let deal_id = fix.market.request_deal("p1", "batch-1", 10, T0 + 10_000).unwrap();
        let buyer = pooled_participant("p1");
        let seller = pooled_participant("p0");
        let request =
            request_key(&BuiltinSignature, &buyer.signer, "p1", "batch-1", T0 + 10_500).unwrap();
        let err = fix
            .market
            .deliver_deal_key(
                &deal_id,
                &request,
                &BuiltinSignature,
                &BuiltinKem,
                &seller.signer,
                &fix.batch_key,
                &[3u8; 32],
                T0 + 10_600,
            )
            .unwrap_err();
        assert!(matches!(err, MarketError::Transition { from: DealState::Requested, .. }));
    }

    #[test]
    fn test_forged_request_leaves_deal_confirmed_without_envelope() {
        let mut fix = fixture();
        let deal_id = fix.market.request_deal("p1", "batch-1", 10, T0 + 10_000).unwrap();
        fix.market.confirm_deal(&deal_id, T0 + 11_000).unwrap();
        // Signed by p0's key but claiming to be p1.
        let intruder = pooled_participant("p0");
        let forged =
            request_key(&BuiltinSignature, &intruder.signer, "p1", "batch-1", T0 + 11_500)
                .unwrap();
        let seller = pooled_participant("p0");
        let err = fix
            .market
            .deliver_deal_key(
                &deal_id,
                &forged,
                &BuiltinSignature,
                &BuiltinKem,
                &seller.signer,
                &fix.batch_key,
                &[3u8; 32],
                T0 + 11_600,
            )
            .unwrap_err();
        assert!(matches!(err, MarketError::Access(_)));
        assert_eq!(fix.market.deal(&deal_id).unwrap().state, DealState::Confirmed);
        assert!(fix.market.envelope(&deal_id).is_none());
    }

    #[test]
    fn test_finalize_satisfied_pays_seller() {
        let mut fix = fixture();
        let deal_id = delivered_deal(&mut fix, 10);
        fix.market.finalize(&deal_id, true, T0 + 20_000).unwrap();
        assert_eq!(fix.market.balance("p0"), 60);
        assert_eq!(fix.market.state().bank.locked_for(&deal_id), 0);
        assert_eq!(fix.market.deal(&deal_id).unwrap().state, DealState::Finalized);
        // Finalizing again is a transition error.
        assert!(matches!(
            fix.market.finalize(&deal_id, true, T0 + 21_000),
            Err(MarketError::Transition { .. })
        ));
    }

    #[test]
    fn test_finalize_unsatisfied_disputes_with_funds_locked() {
        let mut fix = fixture();
        let deal_id = delivered_deal(&mut fix, 10);
        fix.market.finalize(&deal_id, false, T0 + 20_000).unwrap();
        assert_eq!(fix.market.deal(&deal_id).unwrap().state, DealState::Disputed);
        assert_eq!(fix.market.state().bank.locked_for(&deal_id), 10);
        assert_eq!(fix.market.balance("p0"), 50);
    }

    #[test]
    fn test_dispute_refund_on_tampered_payload_restores_buyer() {
        let mut fix = fixture();
        let deal_id = delivered_deal(&mut fix, 10);
        fix.market.finalize(&deal_id, false, T0 + 20_000).unwrap();
        let digest = fix.market.listing("batch-1").unwrap().payload_digest;
        fix.market.corrupt_stored_payload(&digest).unwrap();
        let outcome = fix.market.resolve_dispute(&deal_id, T0 + 21_000).unwrap();
        assert_eq!(outcome, DisputeOutcome::Refunded);
        // The buyer's balance equals its value before request_deal.
        assert_eq!(fix.market.balance("p1"), 100);
        assert_eq!(fix.market.deal(&deal_id).unwrap().state, DealState::Refunded);
    }

    #[test]
    fn test_dispute_with_matching_digest_pays_seller() {
        let mut fix = fixture();
        let deal_id = delivered_deal(&mut fix, 10);
        fix.market.finalize(&deal_id, false, T0 + 20_000).unwrap();
        let outcome = fix.market.resolve_dispute(&deal_id, T0 + 21_000).unwrap();
        assert_eq!(outcome, DisputeOutcome::Finalized);
        assert_eq!(fix.market.balance("p0"), 60);
    }

    #[test]
    fn test_dispute_with_missing_payload_stays_disputed() {
        let mut fix = fixture();
        let deal_id = delivered_deal(&mut fix, 10);
        fix.market.finalize(&deal_id, false, T0 + 20_000).unwrap();
        let digest = fix.market.listing("batch-1").unwrap().payload_digest;
        fix.market.drop_stored_payload(&digest).unwrap();
        assert!(matches!(
            fix.market.resolve_dispute(&deal_id, T0 + 21_000),
            Err(MarketError::Storage(_))
        ));
        assert_eq!(fix.market.deal(&deal_id).unwrap().state, DealState::Disputed);
        // The settlement pass reports it as stuck rather than failing.
        let actions = fix.market.settlement_pass(T0 + 22_000).unwrap();
        assert!(actions
            .iter()
            .any(|a| matches!(a, SettlementAction::DisputeStuck { .. })));
    }

    #[test]
    fn test_settlement_refunds_under_terms_deals() {
        let mut fix = fixture();
        let under = fix.market.request_deal("p1", "batch-1", 4, T0 + 10_000).unwrap();
        let at_min = fix.market.request_deal("p1", "batch-1", 10, T0 + 10_500).unwrap();
        let actions = fix.market.settlement_pass(T0 + 11_000).unwrap();
        assert_eq!(actions.len(), 2);
        assert_eq!(fix.market.deal(&under).unwrap().state, DealState::Refunded);
        assert_eq!(fix.market.deal(&at_min).unwrap().state, DealState::Confirmed);
        assert_eq!(fix.market.balance("p1"), 90); // only the confirmed deposit held
        assert_eq!(fix.market.total_units(), 150);
    }

    #[test]
    fn test_every_accepted_operation_appends_one_block() {
        let mut fix = fixture();
        // Genesis + 2 registrations + 1 listing.
        assert_eq!(fix.market.chain().len(), 4);
        let deal_id = delivered_deal(&mut fix, 10); // request + confirm + deliver
        assert_eq!(fix.market.chain().len(), 7);
        fix.market.finalize(&deal_id, true, T0 + 20_000).unwrap();
        assert_eq!(fix.market.chain().len(), 8);
        fix.market.chain().verify().unwrap();
    }

    #[test]
    fn test_replay_reconstructs_identical_state() {
        let mut fix = fixture();
        let d1 = delivered_deal(&mut fix, 10);
        fix.market.finalize(&d1, false, T0 + 20_000).unwrap();
        fix.market.settlement_pass(T0 + 21_000).unwrap();
        let low = fix.market.request_deal("p1", "batch-1", 2, T0 + 22_000).unwrap();
        fix.market.settlement_pass(T0 + 23_000).unwrap();
        assert_eq!(fix.market.deal(&low).unwrap().state, DealState::Refunded);

        let replayed = Market::replay(fix.market.chain()).unwrap();
        assert_eq!(replayed.state(), fix.market.state());
        assert_eq!(replayed.total_units(), fix.market.total_units());
    }

    #[test]
    fn test_replay_rejects_chain_with_illegal_event() {
        let fix = fixture();
        // A structurally valid block whose event no honest market could
        // produce: confirmation of a deal that was never requested.
        let mut chain = fix.market.chain().clone();
        let rogue = MarketEvent::DealConfirmed {
            deal_id: "deal-000099".into(),
            timestamp: T0 + 50_000,
        };
        let body = canonical_json(&rogue).unwrap();
        let block =
            make_block(chain.tip().map(|b| &b.header), &body, "market", T0 + 50_000).unwrap();
        chain.append(block).unwrap();
        chain.verify().unwrap();
        assert!(matches!(
            Market::replay(&chain),
            Err(MarketError::NotFound(_) | MarketError::Integrity(_))
        ));
    }

    #[test]
    fn test_trace_is_newline_delimited_canonical_events() {
        let mut fix = fixture();
        delivered_deal(&mut fix, 10);
        let trace = fix.market.trace().unwrap();
        assert_eq!(trace.lines().count(), fix.market.chain().len());
        for line in trace.lines() {
            let event: MarketEvent = serde_json::from_str(line).unwrap();
            assert!(!event.kind().is_empty());
            assert!(!line.contains(' '), "canonical JSON has no spaces: {line}");
        }
        let events = fix.market.events().unwrap();
        assert!(matches!(events[0], MarketEvent::Genesis { .. }));
    }
}
