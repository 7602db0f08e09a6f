//! Monitor → Analyze → Plan/Execute, plus the System Management loop.
//!
//! The Execute stage is the only event emitter and the only knowledge-base
//! writer: Monitor and Analyze pass their contributions downstream in the
//! per-chunk message, so the staged (threaded) and single-threaded drivers
//! produce byte-identical event logs. Within one chunk the emission order is
//! fixed: ingest, analysis, at most one alert, then any batch commits and
//! reconfigurations the chunk triggered.

use std::sync::mpsc;

use egw_access::{
    encrypt_batch_with_nonce, BuiltinKem, BuiltinSignature, KemScheme, KeyRing, SignatureScheme,
};
use egw_arrhythmia::{predict, BeatRecord, CLASS_NAMES};
use egw_canon::{canonical_json, sha256, sha256_parts, Hash32, HexBytes};
use egw_dsp::{detect_waves, extract_features, preprocess, BeatFeatures, EcgSignal};
use egw_market::{DeviceRegistration, Market};
use egw_triage::{raise_alerts, AlertEvent, AlertInput};
use serde::{Deserialize, Serialize};

use crate::kb::{ConfigDelta, FeedbackEntry, KnowledgeBase};
use crate::models::Models;
use crate::{GatewayConfig, GatewayError};

/// One fixed-duration slice of the input stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalChunk {
    pub index: u64,
    pub start_sample: usize,
    pub samples: Vec<f64>,
    /// Set on a trailing chunk shorter than the configured duration.
    pub partial: bool,
}

/// Monitor stage: slice the stream into `chunk_seconds` windows. The final
/// partial window is kept and flagged; an empty stream yields no chunks. A
/// stream whose header rate disagrees with the config is rejected outright.
pub fn monitor_ingest(
    samples: &[f64],
    sampling_rate: u32,
    config: &GatewayConfig,
) -> Result<Vec<SignalChunk>, GatewayError> {
    if sampling_rate != config.sampling_rate {
        return Err(GatewayError::Config(format!(
            "stream sampling rate {sampling_rate} Hz differs from configured {} Hz",
            config.sampling_rate
        )));
    }
    let chunk_len = config.sampling_rate as usize * config.chunk_seconds as usize;
    Ok(samples
        .chunks(chunk_len)
        .enumerate()
        .map(|(i, window)| SignalChunk {
            index: i as u64,
            start_sample: i * chunk_len,
            samples: window.to_vec(),
            partial: window.len() < chunk_len,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriageVerdict {
    Normal,
    Abnormal,
    /// No analyzable beats (fewer than two R peaks); routed to raw storage.
    Indeterminate,
}

impl TriageVerdict {
    fn as_str(self) -> &'static str {
        match self {
            TriageVerdict::Normal => "normal",
            TriageVerdict::Abnormal => "abnormal",
            TriageVerdict::Indeterminate => "indeterminate",
        }
    }
}

/// What one chunk contributes to the current data batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordPayload {
    /// Extracted features (and the CNN class for abnormal chunks).
    Processed {
        features: Vec<BeatFeatures>,
        #[serde(skip_serializing_if = "Option::is_none")]
        class: Option<String>,
    },
    /// Unanalyzable or budget-fallback data, passed through as sampled.
    Raw { samples: Vec<f64> },
}

/// One block-bound record. These are serialized, encrypted with the batch's
/// child key and listed on the market at flush time; they never appear in
/// plaintext on the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub chunk_index: u64,
    pub partial: bool,
    pub verdict: TriageVerdict,
    #[serde(flatten)]
    pub payload: RecordPayload,
}

/// Analyze-stage output for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkAnalysis {
    pub chunk_index: u64,
    pub partial: bool,
    pub sample_count: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub verdict: TriageVerdict,
    pub cnn_class: Option<String>,
    /// Per-beat heart rates, for the alert rules.
    pub hr_series: Vec<f64>,
    pub record: BatchRecord,
}

fn ms_at(sample: usize, sampling_rate: u32, start_time_ms: u64) -> u64 {
    start_time_ms + (sample as u128 * 1000 / sampling_rate as u128) as u64
}

/// Majority vote over per-beat triage verdicts; ties read abnormal so a
/// half-suspicious chunk still reaches the classifier and the alert path.
fn chunk_verdict(votes: &[bool]) -> TriageVerdict {
    let abnormal = votes.iter().filter(|&&v| v).count();
    if abnormal * 2 >= votes.len() {
        TriageVerdict::Abnormal
    } else {
        TriageVerdict::Normal
    }
}

/// Beat windows for the CNN: `input_len` samples around each R peak,
/// min-max normalized to [0, 1] like the training records.
fn cnn_windows(samples: &[f64], r_peaks: &[usize], input_len: usize) -> Vec<BeatRecord> {
    let mut out = Vec::with_capacity(r_peaks.len());
    for &r in r_peaks {
        let start = r.saturating_sub(input_len / 2).min(samples.len().saturating_sub(1));
        let end = (start + input_len).min(samples.len());
        let mut window: Vec<f64> = samples[start..end].to_vec();
        let pad = *window.last().unwrap_or(&0.0);
        window.resize(input_len, pad);
        let (lo, hi) = window
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let normalized: Vec<f64> = window.iter().map(|&v| (v - lo) / span).collect();
        out.push(BeatRecord { samples: normalized, label: 0 });
    }
    out
}

/// Analyze stage: preprocess, find waves, extract features, triage, and for
/// abnormal chunks classify with the CNN. No detectable beats means an
/// indeterminate verdict with the raw samples routed to storage; the same
/// raw passthrough applies when the resource budget is exceeded or when a
/// trailing partial chunk is too short to filter at all.
pub fn analyze_chunk(
    chunk: &SignalChunk,
    config: &GatewayConfig,
    models: &Models,
) -> Result<ChunkAnalysis, GatewayError> {
    let start_ms = ms_at(chunk.start_sample, config.sampling_rate, config.start_time_ms);
    let end_ms = ms_at(
        chunk.start_sample + chunk.samples.len(),
        config.sampling_rate,
        config.start_time_ms,
    );
    let indeterminate = |samples: Vec<f64>| ChunkAnalysis {
        chunk_index: chunk.index,
        partial: chunk.partial,
        sample_count: chunk.samples.len(),
        start_ms,
        end_ms,
        verdict: TriageVerdict::Indeterminate,
        cnn_class: None,
        hr_series: Vec::new(),
        record: BatchRecord {
            chunk_index: chunk.index,
            partial: chunk.partial,
            verdict: TriageVerdict::Indeterminate,
            payload: RecordPayload::Raw { samples },
        },
    };

    let signal = EcgSignal::new(chunk.samples.clone(), config.sampling_rate)?;
    let filtered =
        match preprocess(&signal, config.band_low_hz, config.band_high_hz, config.ma_window) {
            Ok(filtered) => filtered,
            // A trailing partial chunk shorter than the smoothing window is
            // unanalyzable: route it to raw storage like other degenerates.
            Err(egw_dsp::DspError::InvalidParameter(_)) | Err(egw_dsp::DspError::TooShort { .. })
                if chunk.partial =>
            {
                return Ok(indeterminate(chunk.samples.clone()))
            }
            Err(err) => return Err(err.into()),
        };
    let marks = detect_waves(&filtered, &config.wave_thresholds)?;
    if marks.r_peaks.len() < 2 {
        return Ok(indeterminate(chunk.samples.clone()));
    }
    let beats: Vec<BeatFeatures> = extract_features(&filtered, &marks)?;
    let hr_series: Vec<f64> = beats.iter().map(|b| b.hr_bpm).collect();
    let votes = beats
        .iter()
        .map(|b| models.triage.is_abnormal(b, config.triage_classifier))
        .collect::<Result<Vec<bool>, _>>()?;
    let verdict = chunk_verdict(&votes);

    let cnn_class = if verdict == TriageVerdict::Abnormal {
        let cnn = models.cnn.as_ref().ok_or_else(|| {
            GatewayError::State("abnormal chunk needs the multiclass model, none loaded".into())
        })?;
        let windows = cnn_windows(&filtered.samples, &marks.r_peaks, cnn.config.input_len);
        let labels = predict(cnn, &windows)?;
        let mut counts = [0usize; CLASS_NAMES.len()];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let majority = counts.iter().enumerate().max_by_key(|&(i, &c)| (c, usize::MAX - i));
        Some(CLASS_NAMES[majority.map(|(i, _)| i).unwrap_or(0)].to_string())
    } else {
        None
    };

    let payload = if config.resource_budget_exceeded {
        RecordPayload::Raw { samples: chunk.samples.clone() }
    } else {
        RecordPayload::Processed { features: beats, class: cnn_class.clone() }
    };
    Ok(ChunkAnalysis {
        chunk_index: chunk.index,
        partial: chunk.partial,
        sample_count: chunk.samples.len(),
        start_ms,
        end_ms,
        verdict,
        cnn_class,
        hr_series,
        record: BatchRecord {
            chunk_index: chunk.index,
            partial: chunk.partial,
            verdict,
            payload,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Ingest,
    Analysis,
    Alert,
    BlockCommitted,
    DeadLetter,
    Reconfig,
}

/// One event-log line. Serialized with sorted keys (the log's canonical
/// form), one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub kind: EventKind,
    pub timestamp: u64,
    pub payload: serde_json::Value,
}

impl PipelineEvent {
    pub fn to_log_json(&self) -> String {
        serde_json::to_value(self).expect("pipeline event serializes").to_string()
    }
}

/// A batch that exhausted its ledger-commit retries. The encrypted payload
/// is parked here for out-of-band recovery instead of being dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadLetter {
    pub batch_id: String,
    pub payload: Vec<u8>,
    pub payload_digest: Hash32,
    pub records: usize,
    pub attempts: u32,
}

const LEDGER_ATTEMPTS: u32 = 3;
const BATCH_DATA_TYPE: &str = "ecg";
const HR_THRESHOLD_FLOOR: f64 = 70.0;
const HR_THRESHOLD_STEP: f64 = 5.0;

/// Plan/Execute plus System Management, owning the knowledge base, the
/// market handle and the batch buffer.
struct Executor<'a> {
    config: &'a GatewayConfig,
    kb: KnowledgeBase,
    market: Market,
    ring: KeyRing,
    registered: bool,
    batch: Vec<BatchRecord>,
    batch_index: u64,
    next_flush_ms: u64,
    clock_ms: u64,
    remaining_failures: u32,
    dead_letters: Vec<DeadLetter>,
    events: Vec<PipelineEvent>,
}

impl<'a> Executor<'a> {
    fn new(config: &'a GatewayConfig, models: &'a Models) -> Result<Self, GatewayError> {
        let kb = KnowledgeBase::new(config.clone(), models.refs())?;
        let market = Market::new(
            vec![(config.gateway_id.clone(), config.market_initial_balance)],
            config.start_time_ms,
        )?;
        let ring = KeyRing::from_seed_material(&config.seed.to_be_bytes());
        Ok(Executor {
            config,
            kb,
            market,
            ring,
            registered: false,
            batch: Vec::new(),
            batch_index: 0,
            next_flush_ms: config.start_time_ms + config.batch_period_s * 1000,
            clock_ms: config.start_time_ms,
            remaining_failures: config.fail_first_n_appends,
            dead_letters: Vec::new(),
            events: Vec::new(),
        })
    }

    fn emit(&mut self, kind: EventKind, timestamp: u64, payload: serde_json::Value) {
        self.events.push(PipelineEvent { kind, timestamp, payload });
    }

    /// The single alert the chunk raises: the highest-priority violated rule
    /// (first metric wins ties), or none.
    fn plan_alert(&self, analysis: &ChunkAnalysis) -> Result<Option<AlertEvent>, GatewayError> {
        if analysis.hr_series.is_empty() {
            return Ok(None);
        }
        let input = AlertInput {
            hr_series: &analysis.hr_series,
            gateway_temp_c: self.config.gateway_temp_c,
            last_data_age_s: self.config.data_timeout_s,
            timestamp: analysis.end_ms,
            source: &self.config.gateway_id,
        };
        let raised = raise_alerts(&input, &self.kb.config().alert_rules)?;
        // Highest priority wins; on ties the earlier metric (heart rate
        // first) keeps the slot.
        Ok(raised.into_iter().fold(None, |best: Option<AlertEvent>, event| match best {
            Some(b) if b.priority >= event.priority => Some(b),
            _ => Some(event),
        }))
    }

    fn handle(&mut self, analysis: ChunkAnalysis) -> Result<(), GatewayError> {
        self.clock_ms = analysis.end_ms;
        self.emit(
            EventKind::Ingest,
            analysis.start_ms,
            serde_json::json!({
                "chunk_index": analysis.chunk_index,
                "samples": analysis.sample_count,
                "partial": analysis.partial,
            }),
        );
        let mut analysis_payload = serde_json::json!({
            "chunk_index": analysis.chunk_index,
            "verdict": analysis.verdict.as_str(),
            "beats": analysis.hr_series.len(),
            "partial": analysis.partial,
        });
        if let Some(class) = &analysis.cnn_class {
            analysis_payload["class"] = serde_json::Value::String(class.clone());
        }
        self.emit(EventKind::Analysis, analysis.end_ms, analysis_payload);

        // Alert precedes any storage commit for this chunk.
        let alert = self.plan_alert(&analysis)?;
        if let Some(event) = &alert {
            self.emit(
                EventKind::Alert,
                analysis.end_ms,
                serde_json::to_value(event).expect("alert serializes"),
            );
        }

        let decision = match &analysis.cnn_class {
            Some(class) => format!("{}/{class}", analysis.verdict.as_str()),
            None => analysis.verdict.as_str().to_string(),
        };
        self.kb.record_feedback(FeedbackEntry {
            chunk_index: analysis.chunk_index,
            decision,
            alert_priority: alert.map(|a| a.priority),
            ground_truth: None,
            timestamp: analysis.end_ms,
        });

        self.batch.push(analysis.record);
        if analysis.end_ms >= self.next_flush_ms {
            self.flush(analysis.end_ms)?;
            self.system_manage(analysis.end_ms)?;
            self.next_flush_ms = analysis.end_ms + self.kb.config().batch_period_s * 1000;
        }
        Ok(())
    }

    fn ensure_registered(&mut self, now_ms: u64) -> Result<(), GatewayError> {
        if self.registered {
            return Ok(());
        }
        let signer = BuiltinSignature.generate(&self.ring.signing_seed())?;
        let kem = BuiltinKem.generate(&self.ring.kem_seed())?;
        self.market.register_device(DeviceRegistration {
            device_id: self.config.gateway_id.clone(),
            owner_id: self.config.gateway_id.clone(),
            verification_key: HexBytes(signer.verification_key.clone()),
            kem_public_key: HexBytes(kem.public_key.clone()),
            registered_at: now_ms,
        })?;
        self.registered = true;
        Ok(())
    }

    /// Encrypt the pending records under this batch's child key and commit
    /// them through the market listing path, retrying before dead-lettering.
    fn flush(&mut self, now_ms: u64) -> Result<(), GatewayError> {
        if self.batch.is_empty() {
            return Ok(());
        }
        self.ensure_registered(now_ms)?;
        let records: Vec<BatchRecord> = std::mem::take(&mut self.batch);
        let batch_id = format!("{}-batch-{:04}", self.config.gateway_id, self.batch_index);
        let plain = serde_json::to_vec(&serde_json::json!({
            "batch_id": batch_id,
            "records": records,
        }))
        .expect("batch records serialize");
        let key = self.ring.child_key(self.batch_index);
        let nonce: [u8; 16] = sha256_parts(&[b"egw/gateway/batch-nonce/v1", batch_id.as_bytes()])
            .0[..16]
            .try_into()
            .expect("16-byte nonce");
        let encrypted = encrypt_batch_with_nonce(&key, &plain, &batch_id, BATCH_DATA_TYPE, nonce)?;
        let payload = canonical_json(&encrypted)?;
        let digest = sha256(&payload);
        self.batch_index += 1;

        let mut last_error = String::new();
        for attempt in 1..=LEDGER_ATTEMPTS {
            if self.remaining_failures > 0 {
                self.remaining_failures -= 1;
                last_error = "ledger append unavailable (injected)".to_string();
                continue;
            }
            match self.market.list_batch(
                &self.config.gateway_id,
                &batch_id,
                &payload,
                digest,
                BATCH_DATA_TYPE,
                self.config.market_min_deposit,
                now_ms,
            ) {
                Ok(()) => {
                    let tip = self.market.chain().tip().expect("chain has blocks");
                    self.emit(
                        EventKind::BlockCommitted,
                        now_ms,
                        serde_json::json!({
                            "batch_id": batch_id,
                            "records": records.len(),
                            "attempts": attempt,
                            "height": tip.header.height,
                            "block_hash": tip.header.hash().to_hex(),
                            "payload_digest": digest.to_hex(),
                        }),
                    );
                    return Ok(());
                }
                Err(err) => last_error = err.to_string(),
            }
        }
        self.emit(
            EventKind::DeadLetter,
            now_ms,
            serde_json::json!({
                "batch_id": batch_id,
                "records": records.len(),
                "attempts": LEDGER_ATTEMPTS,
                "reason": last_error,
            }),
        );
        self.dead_letters.push(DeadLetter {
            batch_id,
            payload,
            payload_digest: digest,
            records: records.len(),
            attempts: LEDGER_ATTEMPTS,
        });
        Ok(())
    }

    /// System Management: inspect the recent feedback window and, under
    /// sustained priority-3 alerts, shorten the batch period (never below
    /// the minimum) and lower the priority-1 heart-rate threshold (never
    /// below the floor). Class labels and crypto parameters are untouchable.
    fn system_manage(&mut self, now_ms: u64) -> Result<(), GatewayError> {
        let window = self.kb.feedback_window();
        if window.is_empty() {
            return Ok(());
        }
        let p3 = window
            .iter()
            .filter(|e| e.alert_priority.is_some_and(|p| p >= 3))
            .count();
        if p3 < self.kb.config().reconfig_alert_count {
            return Ok(());
        }
        let mut delta = ConfigDelta::default();
        let period = self.kb.config().batch_period_s;
        let halved = (period / 2).max(self.kb.config().min_batch_period_s);
        if halved != period {
            delta.batch_period_s = Some((period, halved));
        }
        if let Some(rule) = self
            .kb
            .config()
            .alert_rules
            .iter()
            .find(|r| {
                r.metric == egw_triage::MetricId::HrBpm
                    && r.priority == 1
                    && r.direction == egw_triage::Direction::Above
            })
        {
            let lowered = (rule.threshold - HR_THRESHOLD_STEP).max(HR_THRESHOLD_FLOOR);
            if lowered != rule.threshold {
                delta.hr_priority1_threshold = Some((rule.threshold, lowered));
            }
        }
        if delta.is_empty() {
            return Ok(()); // fully converged; nothing left to tighten
        }
        let from = self.kb.version();
        let to = self.kb.apply_delta(delta.clone(), now_ms)?;
        self.emit(
            EventKind::Reconfig,
            now_ms,
            serde_json::json!({
                "version_from": from,
                "version_to": to,
                "delta": delta,
            }),
        );
        Ok(())
    }

    fn shutdown(&mut self) -> Result<(), GatewayError> {
        let now = self.clock_ms;
        self.flush(now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Everything on the calling thread, in chunk order.
    SingleThread,
    /// Monitor, Analyze and Execute as pipeline stages connected by ordered
    /// channels. Produces the same event log as [`RunMode::SingleThread`].
    Staged,
}

/// A finished pipeline run: the event log, the market (with its chain and
/// sidechain), the final knowledge base and any dead-lettered batches.
#[derive(Debug)]
pub struct GatewayRun {
    pub events: Vec<PipelineEvent>,
    pub market: Market,
    pub kb: KnowledgeBase,
    pub dead_letters: Vec<DeadLetter>,
}

impl GatewayRun {
    /// Newline-delimited canonical JSON, one event per line.
    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&event.to_log_json());
            out.push('\n');
        }
        out
    }
}

/// Runs the full pipeline over a sampled stream. Deterministic: identical
/// inputs produce byte-identical event logs in either mode. Errors carry the
/// stage that raised them.
pub fn run_replay(
    samples: &[f64],
    sampling_rate: u32,
    config: &GatewayConfig,
    models: &Models,
    mode: RunMode,
) -> Result<GatewayRun, GatewayError> {
    config.validate().map_err(GatewayError::at_stage("setup"))?;
    let chunks =
        monitor_ingest(samples, sampling_rate, config).map_err(GatewayError::at_stage("monitor"))?;
    let mut executor = Executor::new(config, models).map_err(GatewayError::at_stage("setup"))?;

    match mode {
        RunMode::SingleThread => {
            for chunk in &chunks {
                let analysis =
                    analyze_chunk(chunk, config, models).map_err(GatewayError::at_stage("analyze"))?;
                executor.handle(analysis).map_err(GatewayError::at_stage("execute"))?;
            }
        }
        RunMode::Staged => {
            std::thread::scope(|scope| -> Result<(), GatewayError> {
                let (chunk_tx, chunk_rx) = mpsc::channel::<SignalChunk>();
                let (analysis_tx, analysis_rx) =
                    mpsc::channel::<Result<ChunkAnalysis, GatewayError>>();
                scope.spawn(move || {
                    for chunk in chunks {
                        if chunk_tx.send(chunk).is_err() {
                            break;
                        }
                    }
                });
                scope.spawn(move || {
                    for chunk in chunk_rx {
                        let result = analyze_chunk(&chunk, config, models);
                        let stop = result.is_err();
                        if analysis_tx.send(result).is_err() || stop {
                            break;
                        }
                    }
                });
                for result in analysis_rx {
                    let analysis = result.map_err(GatewayError::at_stage("analyze"))?;
                    executor.handle(analysis).map_err(GatewayError::at_stage("execute"))?;
                }
                Ok(())
            })?;
        }
    }
    executor.shutdown().map_err(GatewayError::at_stage("execute"))?;
    debug_assert!(
        executor.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp),
        "event timestamps must be non-decreasing"
    );

    Ok(GatewayRun {
        events: executor.events,
        market: executor.market,
        kb: executor.kb,
        dead_letters: executor.dead_letters,
    })
}
