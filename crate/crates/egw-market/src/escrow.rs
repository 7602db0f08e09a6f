//! Deposit escrow with strict unit conservation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::MarketError;

/// Per-party balances plus per-deal locked deposits. Units only ever move
/// between the two maps, so `total()` is invariant across all operations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bank {
    balances: BTreeMap<String, u64>,
    locked: BTreeMap<String, u64>,
}

impl Bank {
    pub fn new(initial: impl IntoIterator<Item = (String, u64)>) -> Self {
        Bank {
            balances: initial.into_iter().collect(),
            locked: BTreeMap::new(),
        }
    }

    pub fn balance(&self, party: &str) -> u64 {
        self.balances.get(party).copied().unwrap_or(0)
    }

    pub fn locked_for(&self, deal_id: &str) -> u64 {
        self.locked.get(deal_id).copied().unwrap_or(0)
    }

    /// Sum of every balance and every locked deposit.
    pub fn total(&self) -> u64 {
        self.balances.values().sum::<u64>() + self.locked.values().sum::<u64>()
    }

    /// Move `amount` from `party`'s balance into escrow under `deal_id`.
    pub fn lock(&mut self, party: &str, deal_id: &str, amount: u64) -> Result<(), MarketError> {
        let balance = self.balances.entry(party.to_string()).or_insert(0);
        if *balance < amount {
            return Err(MarketError::InsufficientFunds {
                balance: *balance,
                needed: amount,
            });
        }
        if self.locked.contains_key(deal_id) {
            return Err(MarketError::Duplicate(format!("escrow for deal {deal_id}")));
        }
        *balance -= amount;
        self.locked.insert(deal_id.to_string(), amount);
        Ok(())
    }

    /// Release the deposit escrowed under `deal_id` to `party` (the seller
    /// on finalization, the buyer on refund).
    pub fn release(&mut self, deal_id: &str, party: &str) -> Result<u64, MarketError> {
        let amount = self
            .locked
            .remove(deal_id)
            .ok_or_else(|| MarketError::NotFound(format!("escrow for deal {deal_id}")))?;
        *self.balances.entry(party.to_string()).or_insert(0) += amount;
        Ok(amount)
    }
}
