//! Layer definitions and forward operations.
//!
//! Convolution follows the paper's formulation: output unit `r` of filter `f`
//! is `sum_{q,n} w[q,n,f] * x[r*S + q, n] + b[f]`. With `same` padding at
//! stride 1 the output length R equals the input length M; the literal
//! output-size formula from the paper is kept as [`eq2_output_size`] for
//! reference because it disagrees with window enumeration (see that function).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    None,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => relu(x),
            Activation::LeakyRelu => leaky_relu(x),
        }
    }

    /// Derivative expressed in terms of the pre-activation input.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

// --- convolution ---------------------------------------------------------------

/// 1-D convolution layer. `weights` has shape `[Q, N, F]`: receptive field,
/// input channels, filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1dLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv1dLayer {
    pub fn dims(&self) -> Result<(usize, usize, usize), NnError> {
        let (q, n, f) = self.weights.dims3()?;
        if self.bias.len() != f {
            return Err(NnError::ShapeMismatch(format!(
                "bias length {} != filter count {f}",
                self.bias.len()
            )));
        }
        if self.stride == 0 || q == 0 || f == 0 || n == 0 {
            return Err(NnError::InvalidParameter("conv dims and stride must be >= 1".into()));
        }
        Ok((q, n, f))
    }

    /// Left padding so that `same` output positions align with input positions.
    pub fn pad_left(&self, q: usize) -> usize {
        match self.padding {
            Padding::None => 0,
            Padding::Same => (q - 1) / 2,
        }
    }
}

/// Output length for a convolution over `m` positions.
///
/// `padding=none` counts the valid windows; `padding=same` is only defined at
/// stride 1, where the output length equals the input length.
pub fn conv_output_size(m: usize, k: usize, s: usize, padding: Padding) -> Result<usize, NnError> {
    if k == 0 || s == 0 {
        return Err(NnError::InvalidParameter("kernel and stride must be >= 1".into()));
    }
    match padding {
        Padding::None => {
            if k > m {
                return Err(NnError::InvalidParameter(format!(
                    "kernel {k} exceeds input length {m} without padding"
                )));
            }
            Ok((m - k) / s + 1)
        }
        Padding::Same => {
            if s != 1 {
                return Err(NnError::InvalidParameter(
                    "same padding is defined for stride 1 only".into(),
                ));
            }
            Ok(m)
        }
    }
}

/// The output-count formula as printed in the source material:
/// `floor((M − (K−1) + 2) / S)`.
///
/// For M=187, K=2, S=1 it yields 188, which disagrees with both window
/// enumeration and the stride-1 statement R = M, so it is exposed for
/// documentation and never used to size layers.
pub fn eq2_output_size(m: usize, k: usize, s: usize) -> usize {
    (m - (k - 1) + 2) / s
}

/// Forward convolution: `[B,M,N] -> [B,R,F]`, linear output (no activation).
pub fn conv1d_forward(input: &Tensor, layer: &Conv1dLayer) -> Result<Tensor, NnError> {
    let (b, m, n_in) = input.dims3()?;
    let (q, n, f) = layer.dims()?;
    if n != n_in {
        return Err(NnError::ShapeMismatch(format!(
            "input has {n_in} channels but layer expects {n}"
        )));
    }
    let r = conv_output_size(m, q, layer.stride, layer.padding)?;
    let pad_left = layer.pad_left(q);
    let w = &layer.weights.data;
    let x = &input.data;
    let mut out = vec![0.0; b * r * f];

    for bi in 0..b {
        for ri in 0..r {
            let out_row = (bi * r + ri) * f;
            out[out_row..out_row + f].copy_from_slice(&layer.bias);
            for qi in 0..q {
                let xi = (ri * layer.stride + qi) as isize - pad_left as isize;
                if xi < 0 || xi as usize >= m {
                    continue; // zero padding contributes nothing
                }
                let x_row = (bi * m + xi as usize) * n;
                for ni in 0..n {
                    let xv = x[x_row + ni];
                    let w_row = (qi * n + ni) * f;
                    for fi in 0..f {
                        out[out_row + fi] += w[w_row + fi] * xv;
                    }
                }
            }
        }
    }
    Ok(Tensor { data: out, shape: vec![b, r, f] })
}

// --- batch normalization ---------------------------------------------------------

/// Per-feature batch normalization. Features are the last tensor axis; the
/// statistics reduce over every other axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
    /// Training batches folded into the running statistics so far.
    pub batches_seen: u64,
}

impl BatchNormLayer {
    pub fn new(features: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            epsilon: 1e-5,
            momentum: 0.9,
            batches_seen: 0,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, features: usize) -> Result<(), NnError> {
        if self.gamma.len() != features
            || self.beta.len() != features
            || self.running_mean.len() != features
            || self.running_var.len() != features
        {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm sized for {} features, input has {features}",
                self.gamma.len()
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(NnError::InvalidParameter("epsilon must be > 0".into()));
        }
        if self.running_var.iter().any(|v| *v < 0.0) {
            return Err(NnError::InvalidParameter("running_var must be >= 0".into()));
        }
        Ok(())
    }
}

/// Internals cached by the train-mode forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct BatchNormCache {
    pub x_hat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn batchnorm_forward(
    input: &Tensor,
    layer: &mut BatchNormLayer,
    mode: Mode,
) -> Result<Tensor, NnError> {
    batchnorm_forward_cached(input, layer, mode).map(|(t, _)| t)
}

pub(crate) fn batchnorm_forward_cached(
    input: &Tensor,
    layer: &mut BatchNormLayer,
    mode: Mode,
) -> Result<(Tensor, Option<BatchNormCache>), NnError> {
    let features = *input
        .shape
        .last()
        .ok_or_else(|| NnError::ShapeMismatch("batchnorm input must have at least 1 axis".into()))?;
    layer.validate(features)?;
    let rows = input.len() / features.max(1);
    if rows == 0 {
        return Err(NnError::ShapeMismatch("batchnorm input is empty".into()));
    }

    match mode {
        Mode::Train => {
            let mut mean = vec![0.0; features];
            for row in 0..rows {
                for c in 0..features {
                    mean[c] += input.data[row * features + c];
                }
            }
            for v in &mut mean {
                *v /= rows as f64;
            }
            let mut var = vec![0.0; features];
            for row in 0..rows {
                for c in 0..features {
                    let d = input.data[row * features + c] - mean[c];
                    var[c] += d * d;
                }
            }
            for v in &mut var {
                *v /= rows as f64;
            }

            let inv_std: Vec<f64> =
                var.iter().map(|v| 1.0 / (v + layer.epsilon).sqrt()).collect();
            let mut x_hat = vec![0.0; input.len()];
            let mut out = vec![0.0; input.len()];
            for row in 0..rows {
                for c in 0..features {
                    let i = row * features + c;
                    let xh = (input.data[i] - mean[c]) * inv_std[c];
                    x_hat[i] = xh;
                    out[i] = layer.gamma[c] * xh + layer.beta[c];
                }
            }

            // First batch seeds the moving average; later batches blend in
            // with the configured momentum.
            if layer.batches_seen == 0 {
                layer.running_mean.copy_from_slice(&mean);
                layer.running_var.copy_from_slice(&var);
            } else {
                for c in 0..features {
                    layer.running_mean[c] =
                        layer.momentum * layer.running_mean[c] + (1.0 - layer.momentum) * mean[c];
                    layer.running_var[c] =
                        layer.momentum * layer.running_var[c] + (1.0 - layer.momentum) * var[c];
                }
            }
            layer.batches_seen += 1;

            let out = Tensor { data: out, shape: input.shape.clone() };
            Ok((out, Some(BatchNormCache { x_hat, inv_std })))
        }
        Mode::Infer => {
            if layer.batches_seen == 0 {
                return Err(NnError::NotTrained);
            }
            let mut out = vec![0.0; input.len()];
            let inv_std: Vec<f64> = layer
                .running_var
                .iter()
                .map(|v| 1.0 / (v + layer.epsilon).sqrt())
                .collect();
            for row in 0..rows {
                for c in 0..features {
                    let i = row * features + c;
                    out[i] = layer.gamma[c] * (input.data[i] - layer.running_mean[c]) * inv_std[c]
                        + layer.beta[c];
                }
            }
            Ok((Tensor { data: out, shape: input.shape.clone() }, None))
        }
    }
}

// --- pooling ---------------------------------------------------------------------

/// Non-overlapping max pooling along the length axis of a `[B,L,C]` tensor.
/// A trailing partial window is pooled over its actual samples, so the output
/// length is `ceil(L / pool_size)`.
pub fn maxpool1d(input: &Tensor, pool_size: usize) -> Result<Tensor, NnError> {
    maxpool1d_cached(input, pool_size).map(|(t, _)| t)
}

pub(crate) fn maxpool1d_cached(
    input: &Tensor,
    pool_size: usize,
) -> Result<(Tensor, Vec<usize>), NnError> {
    if pool_size == 0 {
        return Err(NnError::InvalidParameter("pool_size must be >= 1".into()));
    }
    let (b, l, c) = input.dims3()?;
    let out_len = l.div_ceil(pool_size);
    let mut out = vec![0.0; b * out_len * c];
    let mut argmax = vec![0usize; out.len()];
    for bi in 0..b {
        for oi in 0..out_len {
            let start = oi * pool_size;
            let end = (start + pool_size).min(l);
            for ci in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for li in start..end {
                    let idx = (bi * l + li) * c + ci;
                    // Strict comparison keeps the first maximum on ties.
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                let out_idx = (bi * out_len + oi) * c + ci;
                out[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
    Ok((Tensor { data: out, shape: vec![b, out_len, c] }, argmax))
}

// --- dense -----------------------------------------------------------------------

/// Fully-connected layer; `weights` has shape `[I, J]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn dims(&self) -> Result<(usize, usize), NnError> {
        let (i, j) = self.weights.dims2()?;
        if self.bias.len() != j {
            return Err(NnError::ShapeMismatch(format!(
                "bias length {} != output width {j}",
                self.bias.len()
            )));
        }
        Ok((i, j))
    }
}

/// `y_j = f(sum_i w[i,j] * x_i + b_j)` over a `[B,I]` batch.
pub fn dense_forward(
    input: &Tensor,
    layer: &DenseLayer,
    activation: Activation,
) -> Result<Tensor, NnError> {
    let (b, width) = input.dims2()?;
    let (i_dim, j_dim) = layer.dims()?;
    if width != i_dim {
        return Err(NnError::ShapeMismatch(format!(
            "input width {width} != layer input {i_dim}"
        )));
    }
    let mut out = vec![0.0; b * j_dim];
    for bi in 0..b {
        let out_row = bi * j_dim;
        out[out_row..out_row + j_dim].copy_from_slice(&layer.bias);
        let x_row = bi * i_dim;
        for ii in 0..i_dim {
            let xv = input.data[x_row + ii];
            let w_row = ii * j_dim;
            for jj in 0..j_dim {
                out[out_row + jj] += layer.weights.data[w_row + jj] * xv;
            }
        }
    }
    for v in &mut out {
        *v = activation.apply(*v);
    }
    Ok(Tensor { data: out, shape: vec![b, j_dim] })
}

// --- dropout ---------------------------------------------------------------------

/// Inverted dropout: units are retained with probability `retain_probability`
/// and scaled by its reciprocal, so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub retain_probability: f64,
}

impl DropoutSpec {
    pub fn new(retain_probability: f64) -> Result<Self, NnError> {
        if !(retain_probability > 0.0 && retain_probability <= 1.0) {
            return Err(NnError::InvalidParameter(format!(
                "retain probability must be in (0, 1], got {retain_probability}"
            )));
        }
        Ok(DropoutSpec { retain_probability })
    }

    /// Drop-probability constructor (`DropoutSpec::from_drop_probability(0.4)`
    /// retains with p = 0.6).
    pub fn from_drop_probability(drop: f64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&drop) {
            return Err(NnError::InvalidParameter(format!(
                "drop probability must be in [0, 1), got {drop}"
            )));
        }
        DropoutSpec::new(1.0 - drop)
    }
}

pub fn dropout(input: &Tensor, spec: &DropoutSpec, mode: Mode, rng_seed: u64) -> Tensor {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    dropout_with_rng(input, spec, mode, &mut rng).0
}

pub(crate) fn dropout_with_rng(
    input: &Tensor,
    spec: &DropoutSpec,
    mode: Mode,
    rng: &mut ChaCha12Rng,
) -> (Tensor, Vec<f64>) {
    let p = spec.retain_probability;
    if mode == Mode::Infer || p >= 1.0 {
        return (input.clone(), vec![1.0; input.len()]);
    }
    let scale = 1.0 / p;
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < p { scale } else { 0.0 })
        .collect();
    let data: Vec<f64> = input.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (
        Tensor { data, shape: input.shape.clone() },
        mask,
    )
}

// --- softmax ---------------------------------------------------------------------

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// Index of the most probable class; ties break to the lowest index.
pub fn softmax_argmax(logits: &[f64]) -> usize {
    let probs = softmax(logits);
    let mut best = 0usize;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f64>, shape: Vec<usize>) -> Tensor {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn test_conv_hand_computed_example() {
        // Input [1,2,3], kernel [1,1], bias 0, stride 1, no padding -> [3,5].
        let layer = Conv1dLayer {
            weights: t(vec![1.0, 1.0], vec![2, 1, 1]),
            bias: vec![0.0],
            stride: 1,
            padding: Padding::None,
        };
        let out = conv1d_forward(&t(vec![1.0, 2.0, 3.0], vec![1, 3, 1]), &layer).unwrap();
        assert_eq!(out.shape, vec![1, 2, 1]);
        assert_eq!(out.data, vec![3.0, 5.0]);
    }

    #[test]
    fn test_conv_identity_kernel() {
        let layer = Conv1dLayer {
            weights: t(vec![1.0], vec![1, 1, 1]),
            bias: vec![0.0],
            stride: 1,
            padding: Padding::None,
        };
        let x = t(vec![0.5, -1.5, 2.0, 7.25], vec![1, 4, 1]);
        let out = conv1d_forward(&x, &layer).unwrap();
        assert_eq!(out.data, x.data);
    }

    #[test]
    fn test_conv_same_padding_preserves_length() {
        let layer = Conv1dLayer {
            weights: t(vec![0.5, 0.25], vec![2, 1, 1]),
            bias: vec![1.0],
            stride: 1,
            padding: Padding::Same,
        };
        let out = conv1d_forward(&t(vec![4.0, 8.0, 2.0], vec![1, 3, 1]), &layer).unwrap();
        assert_eq!(out.shape, vec![1, 3, 1]);
        // pad_left = 0 for Q=2: windows [x0 x1], [x1 x2], [x2 0].
        assert_eq!(out.data, vec![1.0 + 2.0 + 2.0, 1.0 + 4.0 + 0.5, 1.0 + 1.0]);
    }

    #[test]
    fn test_conv_shape_errors() {
        let layer = Conv1dLayer {
            weights: t(vec![1.0, 1.0], vec![2, 1, 1]),
            bias: vec![0.0],
            stride: 1,
            padding: Padding::None,
        };
        let two_channel = t(vec![0.0; 8], vec![1, 4, 2]);
        assert!(matches!(conv1d_forward(&two_channel, &layer), Err(NnError::ShapeMismatch(_))));
        let too_short = t(vec![1.0], vec![1, 1, 1]);
        assert!(conv1d_forward(&too_short, &layer).is_err());
    }

    #[test]
    fn test_output_size_rules() {
        assert_eq!(conv_output_size(187, 2, 1, Padding::Same).unwrap(), 187);
        assert_eq!(conv_output_size(10, 2, 1, Padding::None).unwrap(), 9);
        assert_eq!(conv_output_size(10, 3, 2, Padding::None).unwrap(), 4);
        assert!(conv_output_size(2, 5, 1, Padding::None).is_err());
        assert!(conv_output_size(10, 2, 2, Padding::Same).is_err());
        // The printed formula, kept verbatim for reference.
        assert_eq!(eq2_output_size(187, 2, 1), 188);
    }

    #[test]
    fn test_batchnorm_hand_example() {
        // Batch {2, 4}: mean 3, biased var 1 -> outputs ±1/sqrt(1+1e-5).
        let mut layer = BatchNormLayer::new(1);
        let out = batchnorm_forward(&t(vec![2.0, 4.0], vec![2, 1]), &mut layer, Mode::Train).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out.data[0] + expect).abs() < 1e-12);
        assert!((out.data[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn test_batchnorm_gamma_zero_gives_beta() {
        let mut layer = BatchNormLayer::new(2);
        layer.gamma = vec![0.0, 0.0];
        layer.beta = vec![0.25, -3.0];
        let out =
            batchnorm_forward(&t(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]), &mut layer, Mode::Train)
                .unwrap();
        assert_eq!(out.data, vec![0.25, -3.0, 0.25, -3.0]);
    }

    #[test]
    fn test_batchnorm_normalizes_random_batch() {
        let mut layer = BatchNormLayer::new(3);
        let mut data = Vec::new();
        let mut state = 12345u64;
        for _ in 0..300 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push((state >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 2.0);
        }
        let out = batchnorm_forward(&t(data, vec![100, 3]), &mut layer, Mode::Train).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..100).map(|r| out.data[r * 3 + c]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 100.0;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 100.0;
            assert!(mean.abs() < 1e-10, "feature {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "feature {c} var {var}");
        }
    }

    #[test]
    fn test_batchnorm_infer_requires_training_and_is_deterministic() {
        let mut layer = BatchNormLayer::new(1);
        let x = t(vec![1.0, 5.0], vec![2, 1]);
        assert!(matches!(
            batchnorm_forward(&x, &mut layer, Mode::Infer),
            Err(NnError::NotTrained)
        ));
        batchnorm_forward(&x, &mut layer, Mode::Train).unwrap();
        let a = batchnorm_forward(&x, &mut layer, Mode::Infer).unwrap();
        let b = batchnorm_forward(&x, &mut layer, Mode::Infer).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn test_maxpool_examples_and_partial_window() {
        let out = maxpool1d(&t(vec![1.0, 3.0, 2.0, 5.0], vec![1, 4, 1]), 2).unwrap();
        assert_eq!(out.data, vec![3.0, 5.0]);
        let identity = maxpool1d(&t(vec![4.0, 2.0], vec![1, 2, 1]), 1).unwrap();
        assert_eq!(identity.data, vec![4.0, 2.0]);
        // Length 5, pool 2 -> ceil = 3 outputs; the last window holds one value.
        let partial = maxpool1d(&t(vec![1.0, 2.0, 3.0, 4.0, -9.0], vec![1, 5, 1]), 2).unwrap();
        assert_eq!(partial.shape, vec![1, 3, 1]);
        assert_eq!(partial.data, vec![2.0, 4.0, -9.0]);
    }

    #[test]
    fn test_maxpool_matches_windowed_max_oracle() {
        let mut state = 777u64;
        let data: Vec<f64> = (0..100)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                (state >> 40) as f64 / 1e6
            })
            .collect();
        let input = t(data.clone(), vec![1, 100, 1]);
        let out = maxpool1d(&input, 2).unwrap();
        let oracle: Vec<f64> = data.chunks(2).map(|w| w.iter().cloned().fold(f64::MIN, f64::max)).collect();
        assert_eq!(out.data, oracle);
    }

    #[test]
    fn test_dense_examples() {
        let identity = DenseLayer {
            weights: t(vec![1.0, 0.0, 0.0, 1.0], vec![2, 2]),
            bias: vec![0.0, 0.0],
        };
        let x = t(vec![3.5, -2.0], vec![1, 2]);
        let out = dense_forward(&x, &identity, Activation::Linear).unwrap();
        assert_eq!(out.data, x.data);

        let sum_layer = DenseLayer { weights: t(vec![1.0, 1.0], vec![2, 1]), bias: vec![0.5] };
        let out = dense_forward(&t(vec![1.0, 1.0], vec![1, 2]), &sum_layer, Activation::Linear)
            .unwrap();
        assert_eq!(out.data, vec![2.5]);

        let wrong = t(vec![1.0, 2.0, 3.0], vec![1, 3]);
        assert!(matches!(
            dense_forward(&wrong, &sum_layer, Activation::Linear),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn test_leaky_relu_branches() {
        assert_eq!(leaky_relu(2.0), 2.0);
        assert_eq!(leaky_relu(-1.0), -0.01);
        assert_eq!(leaky_relu(0.0), 0.0);
        assert_eq!(relu(-5.0), 0.0);
        assert_eq!(relu(5.0), 5.0);
    }

    #[test]
    fn test_softmax_properties() {
        let logits = vec![0.0, 0.0, 0.0, 0.0, 10.0];
        assert_eq!(softmax_argmax(&logits), 4);
        assert_eq!(softmax_argmax(&[1.0; 5]), 0);
        // Huge logits stay finite thanks to max subtraction.
        let probs = softmax(&[1000.0, 1001.0, 999.0]);
        assert!(probs.iter().all(|p| p.is_finite() && *p > 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn test_softmax_argmax_matches_plain_argmax() {
        let mut state = 31u64;
        for _ in 0..1000 {
            let logits: Vec<f64> = (0..5)
                .map(|_| {
                    state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                    ((state >> 12) as f64 / (1u64 << 52) as f64) * 20.0 - 10.0
                })
                .collect();
            let direct = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            assert_eq!(softmax_argmax(&logits), direct);
        }
    }

    #[test]
    fn test_dropout_contracts() {
        let x = t(vec![1.0; 1000], vec![1000]);
        let full = DropoutSpec::new(1.0).unwrap();
        assert_eq!(dropout(&x, &full, Mode::Train, 7).data, x.data);
        let half = DropoutSpec::new(0.5).unwrap();
        assert_eq!(dropout(&x, &half, Mode::Infer, 7).data, x.data);
        // Deterministic per seed.
        assert_eq!(
            dropout(&x, &half, Mode::Train, 42).data,
            dropout(&x, &half, Mode::Train, 42).data
        );

        let big = t(vec![1.0; 100_000], vec![100_000]);
        let dropped = dropout(&big, &half, Mode::Train, 3);
        let kept = dropped.data.iter().filter(|v| **v != 0.0).count() as f64 / 100_000.0;
        assert!((kept - 0.5).abs() < 0.01, "kept fraction {kept}");
        // Inverted scaling: survivors are 1/p.
        assert!(dropped.data.iter().all(|v| *v == 0.0 || (*v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn test_dropout_spec_validation() {
        assert!(DropoutSpec::new(0.0).is_err());
        assert!(DropoutSpec::new(1.2).is_err());
        assert_eq!(DropoutSpec::from_drop_probability(0.4).unwrap().retain_probability, 0.6);
        assert!(DropoutSpec::from_drop_probability(1.0).is_err());
    }
}
