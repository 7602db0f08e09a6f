//! Binary normal/abnormal triage (linear SVM, Gaussian naive Bayes) and
//! rule-based priority alerting.

mod alerts;
mod nb;
mod svm;

pub use alerts::{
    default_rules, raise_alerts, AlertEvent, AlertInput, AlertRule, Direction, MetricId,
};
pub use nb::{nb_predict, nb_train, GaussianNbModel};
pub use svm::{svm_predict, svm_train, LinearSvmModel, Standardizer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("data error: {0}")]
    Data(String),
    #[error("shape error: expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
