//! MAPE-K edge gateway: Monitor ingests ten-second signal chunks, Analyze
//! runs triage and (for abnormal chunks) the multiclass CNN, Plan/Execute
//! raises priority alerts and commits encrypted batches through the market
//! listing path, and System Management reconfigures thresholds from the
//! feedback log — all over a shared, versioned [`KnowledgeBase`].
//!
//! The pipeline runs either single-threaded or as three staged threads
//! connected by ordered channels; both modes produce byte-identical event
//! logs because every event is emitted by the final Execute stage in chunk
//! order.

mod config;
mod kb;
mod models;
mod pipeline;
mod signal;

pub use config::GatewayConfig;
pub use kb::{ConfigDelta, ConfigMutation, FeedbackEntry, KnowledgeBase, ModelRefs};
pub use models::{bootstrap_triage, Models, TriageClassifier, TriageModel};
pub use pipeline::{
    analyze_chunk, monitor_ingest, run_replay, BatchRecord, ChunkAnalysis, DeadLetter, EventKind,
    GatewayRun, PipelineEvent, RecordPayload, RunMode, SignalChunk, TriageVerdict,
};
pub use signal::{read_signal_csv, synth_ecg, write_signal_csv, SynthSegment};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Configuration is internally inconsistent or disagrees with the input.
    #[error("config error: {0}")]
    Config(String),
    /// A required model or runtime precondition is missing.
    #[error("state error: {0}")]
    State(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input {path}: {reason}")]
    Malformed { path: String, reason: String },
    /// A module error, attributed to the pipeline stage that raised it.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<GatewayError>,
    },
    #[error(transparent)]
    Dsp(#[from] egw_dsp::DspError),
    #[error(transparent)]
    Triage(#[from] egw_triage::TriageError),
    #[error(transparent)]
    Arrhythmia(#[from] egw_arrhythmia::ArrhythmiaError),
    #[error(transparent)]
    Access(#[from] egw_access::AccessError),
    #[error(transparent)]
    Market(#[from] egw_market::MarketError),
    #[error(transparent)]
    Ledger(#[from] egw_ledger::LedgerError),
    #[error(transparent)]
    Canon(#[from] egw_canon::CanonError),
}

impl GatewayError {
    /// Wraps an error with the name of the pipeline stage it came from.
    pub(crate) fn at_stage(stage: &'static str) -> impl FnOnce(GatewayError) -> GatewayError {
        move |source| GatewayError::Stage { stage, source: Box::new(source) }
    }
}
