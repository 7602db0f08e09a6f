//! Gateway configuration: thresholds, rules, batch period, sampling strategy
//! and the seeds that make a run reproducible.

use std::path::Path;

use egw_dsp::WaveThresholds;
use egw_triage::{default_rules, AlertRule};
use serde::{Deserialize, Serialize};

use crate::GatewayError;

/// Full gateway configuration. A copy lives inside the [`crate::KnowledgeBase`],
/// where System Management may adjust the batch period and alert thresholds
/// (never the sampling strategy, class labels, or crypto seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Identifier stamped onto alerts, batches and the market registration.
    pub gateway_id: String,
    /// Expected sampling rate; a signal header that disagrees is rejected.
    pub sampling_rate: u32,
    /// Monitor chunk duration. The paper's flow divides the stream into
    /// ten-second chunks.
    pub chunk_seconds: u32,
    /// Batch period T: processed records are flushed to the ledger each time
    /// the signal clock crosses a multiple of this period.
    pub batch_period_s: u64,
    /// Lower bound System Management may shrink the batch period to.
    pub min_batch_period_s: u64,
    /// Band-pass corners and moving-average width for preprocessing.
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub ma_window: usize,
    /// Wave-detection thresholds used by Analyze.
    pub wave_thresholds: WaveThresholds,
    /// Priority alert rules evaluated by Plan/Execute.
    pub alert_rules: Vec<AlertRule>,
    /// Simulated gateway temperature sensor (°C) fed to the alert rules.
    pub gateway_temp_c: f64,
    /// Simulated "seconds since data last received" fed to the alert rules.
    pub data_timeout_s: f64,
    /// Which binary classifier produces the triage verdict.
    pub triage_classifier: crate::TriageClassifier,
    /// When set, record payloads pass through raw instead of as features
    /// (the resource fallback); triage and alerting still run.
    pub resource_budget_exceeded: bool,
    /// Feedback entries System Management inspects per invocation.
    pub reconfig_window: usize,
    /// Priority-3 alerts within the window that trigger a reconfiguration.
    pub reconfig_alert_count: usize,
    /// Units the gateway starts with on the data market.
    pub market_initial_balance: u64,
    /// Minimum deposit demanded when listing a batch.
    pub market_min_deposit: u64,
    /// Epoch offset (ms) added to all signal-relative timestamps.
    pub start_time_ms: u64,
    /// Master seed for the key ring and the gateway's market identity.
    pub seed: u64,
    /// Failure injection: the first N ledger commit attempts fail, driving
    /// the retry/dead-letter path. Zero in normal operation.
    pub fail_first_n_appends: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            gateway_id: "gateway-01".into(),
            sampling_rate: 360,
            chunk_seconds: 10,
            batch_period_s: 60,
            min_batch_period_s: 10,
            // Diagnostic-mode high-pass corner: a single-pole filter at the
            // 0.5 Hz monitoring corner leaves a post-QRS droop deep enough
            // to bury P and T waves under the detection thresholds.
            band_low_hz: 0.05,
            band_high_hz: 40.0,
            ma_window: 5,
            wave_thresholds: WaveThresholds::default(),
            alert_rules: default_rules(),
            gateway_temp_c: 45.0,
            data_timeout_s: 0.0,
            triage_classifier: crate::TriageClassifier::Svm,
            resource_budget_exceeded: false,
            reconfig_window: 6,
            reconfig_alert_count: 3,
            market_initial_balance: 1_000,
            market_min_deposit: 10,
            start_time_ms: 0,
            seed: 7,
            fail_first_n_appends: 0,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.gateway_id.is_empty() {
            return Err(GatewayError::Config("gateway_id must be non-empty".into()));
        }
        if self.sampling_rate == 0 {
            return Err(GatewayError::Config("sampling_rate must be > 0".into()));
        }
        if self.chunk_seconds == 0 {
            return Err(GatewayError::Config("chunk_seconds must be > 0".into()));
        }
        if self.min_batch_period_s < 10 {
            return Err(GatewayError::Config(
                "min_batch_period_s must be at least 10 seconds".into(),
            ));
        }
        if self.batch_period_s < self.min_batch_period_s {
            return Err(GatewayError::Config(format!(
                "batch_period_s {} is below the minimum {}",
                self.batch_period_s, self.min_batch_period_s
            )));
        }
        if !(self.band_low_hz.is_finite()
            && self.band_high_hz.is_finite()
            && self.band_low_hz > 0.0
            && self.band_high_hz > self.band_low_hz)
        {
            return Err(GatewayError::Config("band corners must satisfy 0 < low < high".into()));
        }
        if self.reconfig_window == 0 || self.reconfig_alert_count == 0 {
            return Err(GatewayError::Config(
                "reconfig window and alert count must be > 0".into(),
            ));
        }
        for rule in &self.alert_rules {
            rule.validate().map_err(GatewayError::from)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_value(self).expect("config serializes").to_string();
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let config: GatewayConfig = serde_json::from_str(text).map_err(|e| {
            GatewayError::Config(format!("unparseable gateway config: {e}"))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
