//! The shared Knowledge component: versioned configuration, model
//! references and the feedback log that System Management learns from.

use egw_triage::{Direction, MetricId};
use serde::{Deserialize, Serialize};

use crate::{GatewayConfig, GatewayError};

/// References to the models the Analyze stage runs. The handles identify
/// model content; the objects themselves live outside the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRefs {
    pub triage: String,
    pub cnn: Option<String>,
}

/// One Analyze decision, with ground truth attached later if it ever
/// becomes known (retraining happens offline from this log).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub chunk_index: u64,
    /// Verdict plus CNN class when one was computed, e.g. `"abnormal/premature ventricular contraction"`.
    pub decision: String,
    /// Highest alert priority the chunk raised, if any.
    pub alert_priority: Option<u32>,
    pub ground_truth: Option<String>,
    pub timestamp: u64,
}

/// What System Management changed, as `(before, after)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigDelta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_period_s: Option<(u64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hr_priority1_threshold: Option<(f64, f64)>,
}

impl ConfigDelta {
    pub fn is_empty(&self) -> bool {
        self.batch_period_s.is_none() && self.hr_priority1_threshold.is_none()
    }
}

/// A recorded configuration mutation; one per version increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigMutation {
    pub version: u32,
    pub timestamp: u64,
    pub delta: ConfigDelta,
}

/// MAPE-K shared knowledge. Every config mutation goes through
/// [`KnowledgeBase::apply_delta`], which increments the version and records
/// the change, so the mutation log always explains how the live config
/// diverged from the boot config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    config: GatewayConfig,
    version: u32,
    mutations: Vec<ConfigMutation>,
    feedback: Vec<FeedbackEntry>,
    model_refs: ModelRefs,
}

impl KnowledgeBase {
    pub fn new(config: GatewayConfig, model_refs: ModelRefs) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(KnowledgeBase { config, version: 1, mutations: Vec::new(), feedback: Vec::new(), model_refs })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn mutations(&self) -> &[ConfigMutation] {
        &self.mutations
    }

    pub fn feedback(&self) -> &[FeedbackEntry] {
        &self.feedback
    }

    pub fn model_refs(&self) -> &ModelRefs {
        &self.model_refs
    }

    pub fn record_feedback(&mut self, entry: FeedbackEntry) {
        self.feedback.push(entry);
    }

    /// The most recent feedback entries System Management inspects.
    pub fn feedback_window(&self) -> &[FeedbackEntry] {
        let window = self.config.reconfig_window;
        let skip = self.feedback.len().saturating_sub(window);
        &self.feedback[skip..]
    }

    /// Applies a non-empty delta, bumping the version by exactly one and
    /// recording the mutation. Empty deltas are rejected so that versions
    /// and observable changes stay in one-to-one correspondence.
    pub fn apply_delta(&mut self, delta: ConfigDelta, timestamp: u64) -> Result<u32, GatewayError> {
        if delta.is_empty() {
            return Err(GatewayError::State("refusing to record an empty config delta".into()));
        }
        if let Some((from, to)) = delta.batch_period_s {
            if self.config.batch_period_s != from {
                return Err(GatewayError::State(format!(
                    "delta expected batch period {from}, live config has {}",
                    self.config.batch_period_s
                )));
            }
            if to < self.config.min_batch_period_s {
                return Err(GatewayError::State(format!(
                    "batch period {to} would undercut the minimum {}",
                    self.config.min_batch_period_s
                )));
            }
            self.config.batch_period_s = to;
        }
        if let Some((from, to)) = delta.hr_priority1_threshold {
            let rule = self
                .config
                .alert_rules
                .iter_mut()
                .find(|r| r.metric == MetricId::HrBpm && r.priority == 1 && r.direction == Direction::Above)
                .ok_or_else(|| GatewayError::State("no priority-1 heart-rate rule to adjust".into()))?;
            if rule.threshold != from {
                return Err(GatewayError::State(format!(
                    "delta expected HR threshold {from}, live rule has {}",
                    rule.threshold
                )));
            }
            rule.threshold = to;
        }
        self.version += 1;
        self.mutations.push(ConfigMutation { version: self.version, timestamp, delta });
        Ok(self.version)
    }
}
