//! Deterministic scenario driver: scripted or seeded-random operation
//! sequences over a fresh market, plus an independent trace auditor.
//!
//! The driver exists for protocol fuzzing, so it deliberately mixes honest
//! operations with ones the market must reject, injects storage faults, and
//! then drives every open deal to a terminal state.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use egw_access::{
    encrypt_batch, request_key, BuiltinKem, BuiltinSignature, KemKeyPair, KemScheme,
    SignatureKeyPair, SignatureScheme,
};
use egw_canon::{canonical_json, sha256, sha256_parts, HexBytes};
use egw_ledger::Chain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::types::{DealState, DeviceRegistration, MarketEvent};
use crate::{Market, MarketError};

/// A simulated participant with its real key material.
#[derive(Clone)]
pub struct Participant {
    pub id: String,
    pub signer: SignatureKeyPair,
    pub kem: KemKeyPair,
}

/// Key generation dominates scenario cost, and key material carries no
/// per-scenario state, so participants are pooled process-wide by id.
pub fn pooled_participant(id: &str) -> Participant {
    static POOL: OnceLock<Mutex<BTreeMap<String, Participant>>> = OnceLock::new();
    let pool = POOL.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut pool = pool.lock().expect("pool lock");
    pool.entry(id.to_string())
        .or_insert_with(|| {
            let sig_seed = sha256_parts(&[b"scenario/sig", id.as_bytes()]).0;
            let kem_seed = sha256_parts(&[b"scenario/kem", id.as_bytes()]).0;
            Participant {
                id: id.to_string(),
                signer: BuiltinSignature.generate(&sig_seed).expect("sig keygen"),
                kem: BuiltinKem.generate(&kem_seed).expect("kem keygen"),
            }
        })
        .clone()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSpec {
    pub id: String,
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub owner: String,
    pub data_type: String,
    pub min_deposit: u64,
    pub payload_len: usize,
}

/// A scripted operation; ids refer to the spec's participants and to deals
/// by creation order (`deal-000000`, `deal-000001`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptOp {
    RequestDeal { buyer: String, batch: String, deposit: u64 },
    Settle,
    DeliverKey { deal: String },
    Finalize { deal: String, satisfied: bool },
    ResolveDispute { deal: String },
    CorruptPayload { batch: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OperationsSpec {
    Random { count: usize },
    Scripted { ops: Vec<ScriptOp> },
}

/// On-disk scenario description: participants, balances, batches, and the
/// operation sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub participants: Vec<ParticipantSpec>,
    pub batches: Vec<BatchSpec>,
    pub operations: OperationsSpec,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, MarketError> {
        serde_json::from_str(text)
            .map_err(|e| MarketError::Integrity(format!("bad scenario file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_value(self).expect("spec serializes").to_string()
    }

    /// A small randomized spec drawn from the pooled participants, used for
    /// mass trace fuzzing.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let n_participants = rng.gen_range(2..=4usize);
        let participants: Vec<ParticipantSpec> = (0..n_participants)
            .map(|i| ParticipantSpec {
                id: format!("p{i}"),
                balance: rng.gen_range(20..200u64),
            })
            .collect();
        let n_batches = rng.gen_range(1..=3usize);
        let batches = (0..n_batches)
            .map(|i| BatchSpec {
                owner: participants[i % participants.len()].id.clone(),
                data_type: if rng.gen_bool(0.7) { "ecg" } else { "temperature" }.into(),
                min_deposit: rng.gen_range(5..30u64),
                payload_len: rng.gen_range(16..128usize),
            })
            .collect();
        ScenarioSpec {
            seed,
            participants,
            batches,
            operations: OperationsSpec::Random { count: rng.gen_range(6..18usize) },
        }
    }
}

/// The completed run: the market plus everything needed to audit it.
pub struct ScenarioRun {
    pub market: Market,
    pub initial_total: u64,
    pub accepted_ops: u64,
    pub rejected_ops: u64,
    pub batch_keys: BTreeMap<String, [u8; 32]>,
    pub participants: Vec<Participant>,
    clock_ms: u64,
    rng: ChaCha12Rng,
}

const CLOCK_START_MS: u64 = 1_000_000;
const CLOCK_STEP_MS: u64 = 1_000;

/// Build the market from `spec` and run its operation sequence. Every
/// operation the market rejects must leave state untouched; unit
/// conservation is asserted after each step.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun, MarketError> {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut clock_ms = CLOCK_START_MS;
    let balances: Vec<(String, u64)> = spec
        .participants
        .iter()
        .map(|p| (p.id.clone(), p.balance))
        .collect();
    let mut market = Market::new(balances, clock_ms)?;
    let initial_total = market.total_units();

    let participants: Vec<Participant> =
        spec.participants.iter().map(|p| pooled_participant(&p.id)).collect();
    for p in &participants {
        clock_ms += CLOCK_STEP_MS;
        market.register_device(DeviceRegistration {
            device_id: p.id.clone(),
            owner_id: p.id.clone(),
            verification_key: HexBytes(p.signer.verification_key.clone()),
            kem_public_key: HexBytes(p.kem.public_key.clone()),
            registered_at: clock_ms,
        })?;
    }

    let mut batch_keys = BTreeMap::new();
    for (i, b) in spec.batches.iter().enumerate() {
        clock_ms += CLOCK_STEP_MS;
        let batch_id = format!("batch-{i:03}");
        let mut key = [0u8; 32];
        rng.fill(&mut key);
        let mut plaintext = vec![0u8; b.payload_len.max(1)];
        rng.fill(plaintext.as_mut_slice());
        let encrypted = encrypt_batch(&key, &plaintext, &batch_id, &b.data_type, &mut rng)?;
        let payload = canonical_json(&encrypted)?;
        market.list_batch(
            &b.owner,
            &batch_id,
            &payload,
            sha256(&payload),
            &b.data_type,
            b.min_deposit,
            clock_ms,
        )?;
        batch_keys.insert(batch_id, key);
    }

    let mut run = ScenarioRun {
        market,
        initial_total,
        accepted_ops: 0,
        rejected_ops: 0,
        batch_keys,
        participants,
        clock_ms,
        rng,
    };
    match &spec.operations {
        OperationsSpec::Scripted { ops } => {
            for op in ops {
                run.execute(op.clone())?;
            }
        }
        OperationsSpec::Random { count } => {
            for _ in 0..*count {
                let op = run.draw_op();
                run.execute(op)?;
            }
        }
    }
    Ok(run)
}

impl ScenarioRun {
    fn tick(&mut self) -> u64 {
        self.clock_ms += CLOCK_STEP_MS;
        self.clock_ms
    }

    fn deal_in_state(&self, state: DealState) -> Option<String> {
        self.market
            .deals()
            .find(|d| d.state == state)
            .map(|d| d.deal_id.clone())
    }

    /// Draw the next random operation. The menu mixes honest progress with
    /// operations that must be rejected and storage faults.
    fn draw_op(&mut self) -> ScriptOp {
        let participants = &self.participants;
        let n_batches = self.batch_keys.len();
        let roll = self.rng.gen_range(0..100u32);
        match roll {
            0..=34 => {
                let buyer = if roll < 4 {
                    "ghost".to_string() // unregistered: must be rejected
                } else {
                    participants[self.rng.gen_range(0..participants.len())].id.clone()
                };
                let batch = if roll < 8 && roll >= 4 {
                    "batch-999".to_string() // unknown: must be rejected
                } else {
                    format!("batch-{:03}", self.rng.gen_range(0..n_batches))
                };
                let deposit = self.rng.gen_range(0..60u64);
                ScriptOp::RequestDeal { buyer, batch, deposit }
            }
            35..=49 => ScriptOp::Settle,
            50..=69 => {
                let deal = self
                    .deal_in_state(DealState::Confirmed)
                    .or_else(|| self.deal_in_state(DealState::Requested)) // wrong state: rejected
                    .unwrap_or_else(|| "deal-999999".into());
                ScriptOp::DeliverKey { deal }
            }
            70..=84 => {
                let deal = self
                    .deal_in_state(DealState::KeyDelivered)
                    .or_else(|| self.deal_in_state(DealState::Finalized)) // wrong state: rejected
                    .unwrap_or_else(|| "deal-999999".into());
                let satisfied = self.rng.gen_bool(0.7);
                ScriptOp::Finalize { deal, satisfied }
            }
            85..=92 => {
                let deal = self
                    .deal_in_state(DealState::Disputed)
                    .unwrap_or_else(|| "deal-999999".into());
                ScriptOp::ResolveDispute { deal }
            }
            _ => {
                let batch = format!("batch-{:03}", self.rng.gen_range(0..n_batches));
                ScriptOp::CorruptPayload { batch }
            }
        }
    }

    /// Run one operation, counting acceptance/rejection; rejected operations
    /// must leave the market state untouched, and units stay conserved.
    fn execute(&mut self, op: ScriptOp) -> Result<(), MarketError> {
        let now = self.tick();
        let result: Result<(), MarketError> = match op {
            ScriptOp::RequestDeal { buyer, batch, deposit } => {
                self.market.request_deal(&buyer, &batch, deposit, now).map(|_| ())
            }
            ScriptOp::Settle => self.market.settlement_pass(now).map(|_| ()),
            ScriptOp::DeliverKey { deal } => self.deliver(&deal, now),
            ScriptOp::Finalize { deal, satisfied } => {
                self.market.finalize(&deal, satisfied, now).map(|_| ())
            }
            ScriptOp::ResolveDispute { deal } => {
                self.market.resolve_dispute(&deal, now).map(|_| ())
            }
            ScriptOp::CorruptPayload { batch } => {
                match self.market.listing(&batch).map(|l| l.payload_digest) {
                    Some(digest) => self.market.corrupt_stored_payload(&digest),
                    None => Err(MarketError::NotFound(format!("listing {batch}"))),
                }
            }
        };
        match result {
            Ok(()) => self.accepted_ops += 1,
            Err(
                MarketError::Unauthorized(_)
                | MarketError::NotFound(_)
                | MarketError::InsufficientFunds { .. }
                | MarketError::Transition { .. }
                | MarketError::Duplicate(_)
                | MarketError::Storage(_)
                | MarketError::Access(_),
            ) => self.rejected_ops += 1,
            Err(e) => return Err(e),
        }
        debug_assert_eq!(self.market.total_units(), self.initial_total);
        Ok(())
    }

    /// Honest key delivery for `deal`: the buyer signs a fresh request, the
    /// seller answers with the envelope.
    fn deliver(&mut self, deal_id: &str, now: u64) -> Result<(), MarketError> {
        let (batch_id, buyer_id) = {
            let deal = self
                .market
                .deal(deal_id)
                .ok_or_else(|| MarketError::NotFound(format!("deal {deal_id}")))?;
            (deal.batch_id.clone(), deal.buyer_id.clone())
        };
        let seller_id = self
            .market
            .listing(&batch_id)
            .map(|l| l.owner_id.clone())
            .ok_or_else(|| MarketError::NotFound(format!("listing {batch_id}")))?;
        let buyer = self.participant(&buyer_id)?;
        let seller = self.participant(&seller_id)?;
        let batch_key = *self
            .batch_keys
            .get(&batch_id)
            .ok_or_else(|| MarketError::NotFound(format!("key for {batch_id}")))?;

        let request =
            request_key(&BuiltinSignature, &buyer.signer, &buyer_id, &batch_id, now)?;
        let mut encap_seed = [0u8; 32];
        self.rng.fill(&mut encap_seed);
        self.market
            .deliver_deal_key(
                deal_id,
                &request,
                &BuiltinSignature,
                &BuiltinKem,
                &seller.signer,
                &batch_key,
                &encap_seed,
                now,
            )
            .map(|_| ())
    }

    fn participant(&self, id: &str) -> Result<Participant, MarketError> {
        self.participants
            .iter()
            .find(|p| p.id == id)
            .cloned()
            .ok_or_else(|| MarketError::NotFound(format!("participant {id}")))
    }

    /// Drive every open deal to a terminal state: settlement passes plus
    /// honest delivery and (sometimes dissatisfied) finalization.
    pub fn run_to_quiescence(&mut self) -> Result<u64, MarketError> {
        for iteration in 0..64 {
            if self.market.deals().all(|d| d.state.is_terminal()) {
                return Ok(iteration);
            }
            let now = self.tick();
            self.market.settlement_pass(now)?;
            let confirmed: Vec<String> = self
                .market
                .deals()
                .filter(|d| d.state == DealState::Confirmed)
                .map(|d| d.deal_id.clone())
                .collect();
            for deal_id in confirmed {
                let now = self.tick();
                self.deliver(&deal_id, now)?;
            }
            let delivered: Vec<String> = self
                .market
                .deals()
                .filter(|d| d.state == DealState::KeyDelivered)
                .map(|d| d.deal_id.clone())
                .collect();
            for deal_id in delivered {
                let now = self.tick();
                let satisfied = self.rng.gen_bool(0.8);
                self.market.finalize(&deal_id, satisfied, now)?;
            }
        }
        Err(MarketError::Integrity(
            "market failed to quiesce within 64 iterations".into(),
        ))
    }
}

/// Independent audit of a transaction chain: re-walks every event with its
/// own bookkeeping (separate from [`Market::replay`]) and checks transition
/// legality, escrow conservation, and that key envelopes only ever follow a
/// confirmation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceAudit {
    pub events: usize,
    pub deals_seen: usize,
    pub terminal_deals: usize,
    pub open_deals: usize,
    pub total_units: u64,
}

pub fn audit_trace(chain: &Chain) -> Result<TraceAudit, MarketError> {
    chain.verify()?;
    let illegal = |what: String| MarketError::Integrity(what);

    let mut balances: BTreeMap<String, u64> = BTreeMap::new();
    let mut locked: BTreeMap<String, (String, u64)> = BTreeMap::new(); // deal -> (buyer, amount)
    let mut registered: Vec<String> = Vec::new();
    let mut listings: BTreeMap<String, (String, u64)> = BTreeMap::new(); // batch -> (owner, min)
    let mut states: BTreeMap<String, DealState> = BTreeMap::new();
    let mut deal_batch: BTreeMap<String, String> = BTreeMap::new();
    let mut confirmed_ever: Vec<String> = Vec::new();
    let mut genesis_total: Option<u64> = None;
    let mut events = 0usize;

    for block in chain.blocks() {
        let event: MarketEvent = serde_json::from_slice(&block.body.0)
            .map_err(|e| illegal(format!("undecodable event: {e}")))?;
        events += 1;
        match &event {
            MarketEvent::Genesis { balances: initial, .. } => {
                if genesis_total.is_some() {
                    return Err(illegal("second genesis event".into()));
                }
                for (id, amount) in initial {
                    *balances.entry(id.clone()).or_insert(0) += amount;
                }
                genesis_total = Some(balances.values().sum());
            }
            MarketEvent::DeviceRegistered { registration } => {
                if registered.contains(&registration.device_id) {
                    return Err(illegal(format!(
                        "duplicate registration {}",
                        registration.device_id
                    )));
                }
                registered.push(registration.device_id.clone());
            }
            MarketEvent::BatchListed { listing } => {
                if !registered.contains(&listing.owner_id) {
                    return Err(illegal(format!("listing by unregistered {}", listing.owner_id)));
                }
                listings.insert(
                    listing.batch_id.clone(),
                    (listing.owner_id.clone(), listing.price_conditions.min_deposit),
                );
            }
            MarketEvent::DealRequested { deal_id, batch_id, buyer_id, deposit, .. } => {
                if states.contains_key(deal_id) {
                    return Err(illegal(format!("duplicate deal {deal_id}")));
                }
                if !registered.contains(buyer_id) {
                    return Err(illegal(format!("deal by unregistered {buyer_id}")));
                }
                if !listings.contains_key(batch_id) {
                    return Err(illegal(format!("deal on unknown batch {batch_id}")));
                }
                let balance = balances.entry(buyer_id.clone()).or_insert(0);
                let new_balance = balance.checked_sub(*deposit).ok_or_else(|| {
                    illegal(format!("deal {deal_id} overdraws buyer {buyer_id}"))
                })?;
                *balance = new_balance;
                locked.insert(deal_id.clone(), (buyer_id.clone(), *deposit));
                states.insert(deal_id.clone(), DealState::Requested);
                deal_batch.insert(deal_id.clone(), batch_id.clone());
            }
            MarketEvent::DealConfirmed { deal_id, .. } => {
                transition(&mut states, deal_id, DealState::Requested, DealState::Confirmed)?;
                confirmed_ever.push(deal_id.clone());
            }
            MarketEvent::DealRefundedUnderTerms { deal_id, .. } => {
                transition(&mut states, deal_id, DealState::Requested, DealState::Refunded)?;
                let (buyer, amount) = locked
                    .remove(deal_id)
                    .ok_or_else(|| illegal(format!("refund without escrow for {deal_id}")))?;
                *balances.entry(buyer).or_insert(0) += amount;
            }
            MarketEvent::KeyDelivered { deal_id, .. } => {
                transition(&mut states, deal_id, DealState::Confirmed, DealState::KeyDelivered)?;
                if !confirmed_ever.contains(deal_id) {
                    return Err(illegal(format!("envelope for never-confirmed {deal_id}")));
                }
            }
            MarketEvent::DealFinalized { deal_id, seller_id, amount, .. } => {
                transition(&mut states, deal_id, DealState::KeyDelivered, DealState::Finalized)?;
                let (_, escrowed) = locked
                    .remove(deal_id)
                    .ok_or_else(|| illegal(format!("finalize without escrow for {deal_id}")))?;
                if escrowed != *amount {
                    return Err(illegal(format!("finalize amount mismatch for {deal_id}")));
                }
                *balances.entry(seller_id.clone()).or_insert(0) += amount;
            }
            MarketEvent::DealDisputed { deal_id, .. } => {
                transition(&mut states, deal_id, DealState::KeyDelivered, DealState::Disputed)?;
            }
            MarketEvent::DisputeResolved { deal_id, outcome, .. } => {
                let (buyer, amount) = locked
                    .remove(deal_id)
                    .ok_or_else(|| illegal(format!("resolution without escrow for {deal_id}")))?;
                match outcome {
                    crate::DisputeOutcome::Refunded => {
                        transition(&mut states, deal_id, DealState::Disputed, DealState::Refunded)?;
                        *balances.entry(buyer).or_insert(0) += amount;
                    }
                    crate::DisputeOutcome::Finalized => {
                        transition(&mut states, deal_id, DealState::Disputed, DealState::Finalized)?;
                        let batch = &deal_batch[deal_id];
                        let seller = listings[batch].0.clone();
                        *balances.entry(seller).or_insert(0) += amount;
                    }
                }
            }
        }
        // Conservation after every single event.
        let total = balances.values().sum::<u64>()
            + locked.values().map(|(_, amount)| amount).sum::<u64>();
        let expected = genesis_total.ok_or_else(|| illegal("event before genesis".into()))?;
        if total != expected {
            return Err(illegal(format!(
                "conservation broken after event {events}: {total} != {expected}"
            )));
        }
    }

    let terminal = states.values().filter(|s| s.is_terminal()).count();
    Ok(TraceAudit {
        events,
        deals_seen: states.len(),
        terminal_deals: terminal,
        open_deals: states.len() - terminal,
        total_units: genesis_total.unwrap_or(0),
    })
}

fn transition(
    states: &mut BTreeMap<String, DealState>,
    deal_id: &str,
    from: DealState,
    to: DealState,
) -> Result<(), MarketError> {
    let state = states
        .get_mut(deal_id)
        .ok_or_else(|| MarketError::Integrity(format!("event for unknown deal {deal_id}")))?;
    if *state != from {
        return Err(MarketError::Integrity(format!(
            "illegal transition for {deal_id}: {:?} -> {to:?} (expected from {from:?})",
            state
        )));
    }
    *state = to;
    Ok(())
}
