//! Linear SVM trained with the Pegasos stochastic subgradient method.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::TriageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Regularization strength λ the model was trained with.
    pub lambda: f64,
}

/// Z-score feature scaling fitted on training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fit per-feature mean and population standard deviation. Constant
    /// features get unit scale so they standardize to zero.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self, TriageError> {
        let dim = check_features(features)?;
        let n = features.len() as f64;
        let mut means = vec![0.0; dim];
        for row in features {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut stds = vec![0.0; dim];
        for row in features {
            for (s, (v, m)) in stds.iter_mut().zip(row.iter().zip(&means)) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut stds {
            *s = s.sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Ok(Standardizer { means, stds })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, TriageError> {
        if x.len() != self.means.len() {
            return Err(TriageError::Shape { expected: self.means.len(), got: x.len() });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn transform_all(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TriageError> {
        features.iter().map(|row| self.transform(row)).collect()
    }
}

fn check_features(features: &[Vec<f64>]) -> Result<usize, TriageError> {
    let first = features.first().ok_or_else(|| TriageError::Data("no examples".into()))?;
    let dim = first.len();
    if dim == 0 {
        return Err(TriageError::Data("zero-dimensional features".into()));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(TriageError::Shape { expected: dim, got: row.len() });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(TriageError::Data(format!("non-finite feature at row {i}, column {j}")));
        }
    }
    Ok(dim)
}

/// Hinge-loss stochastic subgradient descent (Pegasos): step size 1/(λ·t),
/// weights shrunk by the regularizer every step, the bias left unregularized.
/// Runs `epochs` passes over per-epoch shuffled data; deterministic per seed.
pub fn svm_train(
    features: &[Vec<f64>],
    labels: &[i8],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearSvmModel, TriageError> {
    let dim = check_features(features)?;
    if labels.len() != features.len() {
        return Err(TriageError::Data(format!(
            "{} labels for {} examples",
            labels.len(),
            features.len()
        )));
    }
    if labels.iter().any(|&y| y != -1 && y != 1) {
        return Err(TriageError::Data("labels must be -1 or +1".into()));
    }
    if !labels.iter().any(|&y| y == 1) || !labels.iter().any(|&y| y == -1) {
        return Err(TriageError::Data("training data contains a single class".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(TriageError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if epochs == 0 {
        return Err(TriageError::InvalidParameter("epochs must be positive".into()));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut t = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let y = labels[i] as f64;
            let margin = y * (dot(&w, &features[i]) + b);
            let shrink = 1.0 - eta * lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(&features[i]) {
                    *wj += eta * y * xj;
                }
                b += eta * y;
            }
        }
    }
    Ok(LinearSvmModel { weights: w, bias: b, lambda })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Decision `sign(w·x + b)` with the margin value; a zero margin classifies
/// as +1 by the declared tie-break.
pub fn svm_predict(model: &LinearSvmModel, x: &[f64]) -> Result<(i8, f64), TriageError> {
    if x.len() != model.weights.len() {
        return Err(TriageError::Shape { expected: model.weights.len(), got: x.len() });
    }
    let margin = dot(&model.weights, x) + model.bias;
    let label = if margin >= 0.0 { 1 } else { -1 };
    Ok((label, margin))
}
