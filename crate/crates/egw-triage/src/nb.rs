//! Gaussian naive Bayes with a variance floor.

use serde::{Deserialize, Serialize};

use crate::TriageError;

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    /// Distinct class labels in ascending order.
    pub classes: Vec<i32>,
    /// Per-class feature means, indexed like `classes`.
    pub means: Vec<Vec<f64>>,
    /// Per-class feature variances, floored at `VARIANCE_FLOOR`.
    pub variances: Vec<Vec<f64>>,
    /// Log of the empirical class priors (priors sum to 1).
    pub log_priors: Vec<f64>,
}

/// Fit per-class Gaussian feature models with empirical priors.
pub fn nb_train(features: &[Vec<f64>], labels: &[i32]) -> Result<GaussianNbModel, TriageError> {
    if features.is_empty() {
        return Err(TriageError::Data("no examples".into()));
    }
    if labels.len() != features.len() {
        return Err(TriageError::Data(format!(
            "{} labels for {} examples",
            labels.len(),
            features.len()
        )));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(TriageError::Data("zero-dimensional features".into()));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(TriageError::Shape { expected: dim, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(TriageError::Data(format!("non-finite feature in row {i}")));
        }
    }

    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(TriageError::Data("training data contains a single class".into()));
    }

    let n_total = features.len() as f64;
    let mut means = Vec::with_capacity(classes.len());
    let mut variances = Vec::with_capacity(classes.len());
    let mut log_priors = Vec::with_capacity(classes.len());
    for &class in &classes {
        let rows: Vec<&Vec<f64>> = features
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == class)
            .map(|(x, _)| x)
            .collect();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for row in &rows {
            for (s, (v, m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for v in &mut var {
            *v = v.max(VARIANCE_FLOOR);
        }
        means.push(mean);
        variances.push(var);
        log_priors.push((n / n_total).ln());
    }
    Ok(GaussianNbModel { classes, means, variances, log_priors })
}

/// Log-posterior argmax. Returns the winning label and the per-class
/// log-posteriors (log prior + Gaussian log-likelihood), ordered like
/// `model.classes`. Ties go to the lowest label.
pub fn nb_predict(model: &GaussianNbModel, x: &[f64]) -> Result<(i32, Vec<f64>), TriageError> {
    let dim = model.means[0].len();
    if x.len() != dim {
        return Err(TriageError::Shape { expected: dim, got: x.len() });
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let scores: Vec<f64> = (0..model.classes.len())
        .map(|c| {
            let mut score = model.log_priors[c];
            for ((v, m), var) in x.iter().zip(&model.means[c]).zip(&model.variances[c]) {
                score += -0.5 * (ln_2pi + var.ln() + (v - m) * (v - m) / var);
            }
            score
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((model.classes[best], scores))
}
