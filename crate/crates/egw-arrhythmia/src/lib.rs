//! Heartbeat dataset handling, the 1D-CNN arrhythmia classifier, evaluation
//! metrics, and model persistence.
//!
//! Beats are fixed-length amplitude vectors (default 187 samples, one lead)
//! with labels 0–4:
//! 0 = normal, 1 = fusion of paced and normal, 2 = premature ventricular
//! contraction, 3 = atrial premature, 4 = fusion of ventricular and normal.

mod dataset;
mod metrics;
mod model;
mod persist;
pub mod synth;

pub use dataset::{
    class_histogram, load_beats, resample, stratified_subset, write_beats, BeatRecord,
    SamplingKind, SamplingStrategy,
};
pub use metrics::{
    metrics_from_confusion, metrics_report, metrics_to_json, published_comparison, ClassMetrics,
    Metrics, PUBLISHED_CLASS_METRICS, PUBLISHED_MACRO_AVG, PUBLISHED_WEIGHTED_AVG,
};
pub use model::{
    build_model, evaluate, predict, train_model, ModelConfig, TrainOptions, TrainedModel,
    CLASS_NAMES, NUM_CLASSES,
};
pub use persist::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArrhythmiaError {
    #[error("format error in {path} row {row}: {reason}")]
    Format { path: String, row: usize, reason: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("training error at step {step}: non-finite loss (diverged)")]
    Diverged { step: u64 },
    #[error("network error: {0}")]
    Network(#[from] egw_nn::NnError),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("model checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("config mismatch: model has {found} output classes, pipeline expects {expected}")]
    ConfigMismatch { expected: usize, found: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ArrhythmiaError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ArrhythmiaError::Io { path: path.display().to_string(), source }
    }
}
