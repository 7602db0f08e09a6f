//! Layer stack, backpropagation, and SGD.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::ops::{
    batchnorm_forward_cached, conv1d_forward, dense_forward, dropout_with_rng, maxpool1d_cached,
    Activation, BatchNormCache, BatchNormLayer, Conv1dLayer, DenseLayer, DropoutSpec, Mode,
    Padding,
};
use crate::{softmax, NnError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv1d(Conv1dLayer),
    BatchNorm(BatchNormLayer),
    Activation(Activation),
    MaxPool { pool_size: usize },
    Dropout(DropoutSpec),
    Flatten,
    Dense(DenseLayer),
}

/// Numeric width of stored parameters and activations. `F32` keeps the same
/// f64 kernels but rounds values through 32-bit floats at layer boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub precision: Precision,
}

/// Per-layer state captured by a train-mode forward pass.
enum Cache {
    Conv { input: Tensor },
    BatchNorm { cache: BatchNormCache },
    Activation { pre: Tensor },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dropout { mask: Vec<f64> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor },
}

/// Parameter gradients for one layer; `Pair` covers conv/dense (weights+bias)
/// and batchnorm (gamma+beta).
#[derive(Debug, Clone)]
enum GradSlot {
    None,
    Pair { dw: Vec<f64>, db: Vec<f64> },
}

impl Model {
    pub fn new(layers: Vec<Layer>) -> Self {
        Model { layers, precision: Precision::F64 }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        if precision == Precision::F32 {
            self.round_params();
        }
        self
    }

    fn round_tensor(&self, t: &mut Tensor) {
        if self.precision == Precision::F32 {
            for v in &mut t.data {
                *v = *v as f32 as f64;
            }
        }
    }

    fn round_params(&mut self) {
        if self.precision != Precision::F32 {
            return;
        }
        let round = |xs: &mut [f64]| {
            for v in xs {
                *v = *v as f32 as f64;
            }
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(c) => {
                    round(&mut c.weights.data);
                    round(&mut c.bias);
                }
                Layer::BatchNorm(b) => {
                    round(&mut b.gamma);
                    round(&mut b.beta);
                    round(&mut b.running_mean);
                    round(&mut b.running_var);
                }
                Layer::Dense(d) => {
                    round(&mut d.weights.data);
                    round(&mut d.bias);
                }
                _ => {}
            }
        }
    }

    /// Inference pass: batchnorm uses running statistics, dropout is identity.
    /// Fails if any batchnorm layer has never seen a training batch.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = input.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv1d(c) => conv1d_forward(&cur, c)?,
                Layer::BatchNorm(b) => {
                    // Infer mode never mutates; clone the small parameter
                    // vectors rather than the activations.
                    let mut b = b.clone();
                    batchnorm_forward_cached(&cur, &mut b, Mode::Infer)?.0
                }
                Layer::Activation(a) => {
                    let mut t = cur;
                    for v in &mut t.data {
                        *v = a.apply(*v);
                    }
                    t
                }
                Layer::MaxPool { pool_size } => maxpool1d_cached(&cur, *pool_size)?.0,
                Layer::Dropout(_) => cur,
                Layer::Flatten => flatten(cur)?,
                Layer::Dense(d) => dense_forward(&cur, d, Activation::Linear)?,
            };
            self.round_tensor(&mut cur);
        }
        Ok(cur)
    }

    /// Training-mode forward pass; consumes dropout randomness from `rng` and
    /// updates batchnorm running statistics.
    fn forward_train(
        &mut self,
        input: &Tensor,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Tensor, Vec<Cache>), NnError> {
        let precision = self.precision;
        let round = |t: &mut Tensor| {
            if precision == Precision::F32 {
                for v in &mut t.data {
                    *v = *v as f32 as f64;
                }
            }
        };
        let mut cur = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (next, cache) = match layer {
                Layer::Conv1d(c) => {
                    let out = conv1d_forward(&cur, c)?;
                    (out, Cache::Conv { input: std::mem::replace(&mut cur, Tensor::zeros(vec![0])) })
                }
                Layer::BatchNorm(b) => {
                    let (out, cache) = batchnorm_forward_cached(&cur, b, Mode::Train)?;
                    let cache = cache.expect("train mode always caches");
                    (out, Cache::BatchNorm { cache })
                }
                Layer::Activation(a) => {
                    let mut out = cur.clone();
                    for v in &mut out.data {
                        *v = a.apply(*v);
                    }
                    (out, Cache::Activation { pre: std::mem::replace(&mut cur, Tensor::zeros(vec![0])) })
                }
                Layer::MaxPool { pool_size } => {
                    let (out, argmax) = maxpool1d_cached(&cur, *pool_size)?;
                    (out, Cache::MaxPool { input_shape: cur.shape.clone(), argmax })
                }
                Layer::Dropout(spec) => {
                    let (out, mask) = dropout_with_rng(&cur, spec, Mode::Train, rng);
                    (out, Cache::Dropout { mask })
                }
                Layer::Flatten => {
                    let shape = cur.shape.clone();
                    (flatten(cur.clone())?, Cache::Flatten { input_shape: shape })
                }
                Layer::Dense(d) => {
                    let out = dense_forward(&cur, d, Activation::Linear)?;
                    (out, Cache::Dense { input: std::mem::replace(&mut cur, Tensor::zeros(vec![0])) })
                }
            };
            cur = next;
            round(&mut cur);
            caches.push(cache);
        }
        Ok((cur, caches))
    }

    /// Backpropagates `dout` through the cached forward pass; returns per-layer
    /// parameter gradients.
    fn backward(&self, caches: &[Cache], dout: Tensor) -> Result<Vec<GradSlot>, NnError> {
        let mut grads: Vec<GradSlot> = (0..self.layers.len()).map(|_| GradSlot::None).collect();
        let mut dcur = dout;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            match (layer, &caches[idx]) {
                (Layer::Conv1d(c), Cache::Conv { input }) => {
                    let (dx, dw, db) = conv1d_backward(input, c, &dcur)?;
                    grads[idx] = GradSlot::Pair { dw, db };
                    dcur = dx;
                }
                (Layer::BatchNorm(b), Cache::BatchNorm { cache }) => {
                    let (dx, dgamma, dbeta) = batchnorm_backward(b, cache, &dcur)?;
                    grads[idx] = GradSlot::Pair { dw: dgamma, db: dbeta };
                    dcur = dx;
                }
                (Layer::Activation(a), Cache::Activation { pre }) => {
                    let mut dx = dcur;
                    for (g, x) in dx.data.iter_mut().zip(&pre.data) {
                        *g *= a.derivative(*x);
                    }
                    dcur = dx;
                }
                (Layer::MaxPool { .. }, Cache::MaxPool { input_shape, argmax }) => {
                    let mut dx = Tensor::zeros(input_shape.clone());
                    for (k, &src) in argmax.iter().enumerate() {
                        dx.data[src] += dcur.data[k];
                    }
                    dcur = dx;
                }
                (Layer::Dropout(_), Cache::Dropout { mask }) => {
                    for (g, m) in dcur.data.iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                (Layer::Flatten, Cache::Flatten { input_shape }) => {
                    dcur = Tensor { data: dcur.data, shape: input_shape.clone() };
                }
                (Layer::Dense(d), Cache::Dense { input }) => {
                    let (dx, dw, db) = dense_backward(input, d, &dcur)?;
                    grads[idx] = GradSlot::Pair { dw, db };
                    dcur = dx;
                }
                _ => {
                    return Err(NnError::InvalidParameter(
                        "forward cache does not match model layers".into(),
                    ))
                }
            }
        }
        Ok(grads)
    }

    /// Trainable parameters flattened in layer order (conv: weights then bias;
    /// batchnorm: gamma then beta; dense: weights then bias).
    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv1d(c) => {
                    out.extend_from_slice(&c.weights.data);
                    out.extend_from_slice(&c.bias);
                }
                Layer::BatchNorm(b) => {
                    out.extend_from_slice(&b.gamma);
                    out.extend_from_slice(&b.beta);
                }
                Layer::Dense(d) => {
                    out.extend_from_slice(&d.weights.data);
                    out.extend_from_slice(&d.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.get_params().len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::ShapeMismatch(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut pos = 0usize;
        let mut take = |n: usize| {
            let s = &params[pos..pos + n];
            pos += n;
            s.to_vec()
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(c) => {
                    c.weights.data = take(c.weights.data.len());
                    c.bias = take(c.bias.len());
                }
                Layer::BatchNorm(b) => {
                    b.gamma = take(b.gamma.len());
                    b.beta = take(b.beta.len());
                }
                Layer::Dense(d) => {
                    d.weights.data = take(d.weights.data.len());
                    d.bias = take(d.bias.len());
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn flatten(t: Tensor) -> Result<Tensor, NnError> {
    let b = t.batch();
    if b == 0 {
        return Err(NnError::ShapeMismatch("cannot flatten an empty tensor".into()));
    }
    let width = t.len() / b;
    Ok(Tensor { data: t.data, shape: vec![b, width] })
}

fn conv1d_backward(
    input: &Tensor,
    layer: &Conv1dLayer,
    dout: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
    let (b, m, _) = input.dims3()?;
    let (q, n, f) = layer.dims()?;
    let (_, r, _) = dout.dims3()?;
    let pad_left = layer.pad_left(q);
    let w = &layer.weights.data;
    let x = &input.data;
    let dy = &dout.data;

    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; f];
    let mut dx = vec![0.0; x.len()];

    for bi in 0..b {
        for ri in 0..r {
            let dy_row = (bi * r + ri) * f;
            for fi in 0..f {
                db[fi] += dy[dy_row + fi];
            }
            for qi in 0..q {
                let xi = (ri * layer.stride + qi) as isize - pad_left as isize;
                if xi < 0 || xi as usize >= m {
                    continue;
                }
                let x_row = (bi * m + xi as usize) * n;
                for ni in 0..n {
                    let xv = x[x_row + ni];
                    let w_row = (qi * n + ni) * f;
                    let mut dxv = 0.0;
                    for fi in 0..f {
                        let g = dy[dy_row + fi];
                        dw[w_row + fi] += xv * g;
                        dxv += w[w_row + fi] * g;
                    }
                    dx[x_row + ni] += dxv;
                }
            }
        }
    }
    Ok((Tensor { data: dx, shape: input.shape.clone() }, dw, db))
}

fn batchnorm_backward(
    layer: &BatchNormLayer,
    cache: &BatchNormCache,
    dout: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
    let features = layer.features();
    let rows = dout.len() / features;
    let dy = &dout.data;
    let mut dgamma = vec![0.0; features];
    let mut dbeta = vec![0.0; features];
    for row in 0..rows {
        for c in 0..features {
            let i = row * features + c;
            dgamma[c] += dy[i] * cache.x_hat[i];
            dbeta[c] += dy[i];
        }
    }
    let rows_f = rows as f64;
    let mut dx = vec![0.0; dout.len()];
    for row in 0..rows {
        for c in 0..features {
            let i = row * features + c;
            dx[i] = layer.gamma[c] * cache.inv_std[c]
                * (dy[i] - dbeta[c] / rows_f - cache.x_hat[i] * dgamma[c] / rows_f);
        }
    }
    Ok((Tensor { data: dx, shape: dout.shape.clone() }, dgamma, dbeta))
}

fn dense_backward(
    input: &Tensor,
    layer: &DenseLayer,
    dout: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
    let (b, i_dim) = input.dims2()?;
    let (_, j_dim) = layer.dims()?;
    let x = &input.data;
    let w = &layer.weights.data;
    let dy = &dout.data;
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; j_dim];
    let mut dx = vec![0.0; x.len()];
    for bi in 0..b {
        let x_row = bi * i_dim;
        let dy_row = bi * j_dim;
        for jj in 0..j_dim {
            db[jj] += dy[dy_row + jj];
        }
        for ii in 0..i_dim {
            let xv = x[x_row + ii];
            let w_row = ii * j_dim;
            let mut dxv = 0.0;
            for jj in 0..j_dim {
                let g = dy[dy_row + jj];
                dw[w_row + jj] += xv * g;
                dxv += w[w_row + jj] * g;
            }
            dx[x_row + ii] += dxv;
        }
    }
    Ok((Tensor { data: dx, shape: input.shape.clone() }, dw, db))
}

/// Mean cross-entropy over softmax outputs plus its gradient w.r.t. logits.
pub fn cross_entropy_with_logits(
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor), NnError> {
    let (b, classes) = logits.dims2()?;
    if labels.len() != b {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= classes) {
        return Err(NnError::InvalidParameter(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; logits.len()];
    for bi in 0..b {
        let row = &logits.data[bi * classes..(bi + 1) * classes];
        let probs = softmax(row);
        // ln(0) = -inf and NaN both propagate into the loss, where the
        // trainer reports them as divergence.
        loss -= probs[labels[bi]].ln();
        for c in 0..classes {
            let target = if c == labels[bi] { 1.0 } else { 0.0 };
            dlogits[bi * classes + c] = (probs[c] - target) / b as f64;
        }
    }
    Ok((loss / b as f64, Tensor { data: dlogits, shape: logits.shape.clone() }))
}

/// SGD driver. Holds the dropout RNG stream and per-parameter momentum
/// velocities; one trainer per model at a time.
pub struct Trainer {
    pub learning_rate: f64,
    pub momentum: f64,
    rng: ChaCha12Rng,
    velocities: Vec<GradSlot>,
    steps: u64,
}

impl Trainer {
    pub fn new(learning_rate: f64, momentum: f64, rng: ChaCha12Rng) -> Self {
        Trainer { learning_rate, momentum, rng, velocities: Vec::new(), steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One SGD step over a batch; returns the pre-update loss.
    pub fn step(
        &mut self,
        model: &mut Model,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<f64, NnError> {
        let (logits, caches) = model.forward_train(batch, &mut self.rng)?;
        let (loss, dlogits) = cross_entropy_with_logits(&logits, labels)?;
        if !loss.is_finite() {
            return Err(NnError::NonFiniteLoss { step: self.steps });
        }
        let grads = model.backward(&caches, dlogits)?;

        if self.velocities.is_empty() {
            self.velocities = grads
                .iter()
                .map(|g| match g {
                    GradSlot::None => GradSlot::None,
                    GradSlot::Pair { dw, db } => GradSlot::Pair {
                        dw: vec![0.0; dw.len()],
                        db: vec![0.0; db.len()],
                    },
                })
                .collect();
        }

        if self.learning_rate != 0.0 {
            let lr = self.learning_rate;
            let mu = self.momentum;
            for ((layer, grad), vel) in
                model.layers.iter_mut().zip(&grads).zip(self.velocities.iter_mut())
            {
                let (GradSlot::Pair { dw, db }, GradSlot::Pair { dw: vw, db: vb }) = (grad, vel)
                else {
                    continue;
                };
                let (weights, bias): (&mut [f64], &mut [f64]) = match layer {
                    Layer::Conv1d(c) => (&mut c.weights.data, &mut c.bias),
                    Layer::BatchNorm(b) => (&mut b.gamma, &mut b.beta),
                    Layer::Dense(d) => (&mut d.weights.data, &mut d.bias),
                    _ => continue,
                };
                for ((p, g), v) in weights.iter_mut().zip(dw).zip(vw.iter_mut()) {
                    *v = mu * *v - lr * g;
                    *p += *v;
                }
                for ((p, g), v) in bias.iter_mut().zip(db).zip(vb.iter_mut()) {
                    *v = mu * *v - lr * g;
                    *p += *v;
                }
            }
            model.round_params();
        }

        self.steps += 1;
        Ok(loss)
    }
}

/// Named per the training contract: forward, cross-entropy, backward, SGD.
/// The trainer carries the learning rate, momentum and RNG stream.
pub fn backward_and_sgd_step(
    model: &mut Model,
    trainer: &mut Trainer,
    batch: &Tensor,
    labels: &[usize],
) -> Result<f64, NnError> {
    trainer.step(model, batch, labels)
}

// --- initialization ---------------------------------------------------------------

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
fn glorot(rng: &mut ChaCha12Rng, fan_in: usize, fan_out: usize, count: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-a..a)).collect()
}

pub fn init_conv1d(
    q: usize,
    n: usize,
    f: usize,
    stride: usize,
    padding: Padding,
    rng: &mut ChaCha12Rng,
) -> Conv1dLayer {
    let weights = Tensor {
        data: glorot(rng, q * n, q * f, q * n * f),
        shape: vec![q, n, f],
    };
    Conv1dLayer { weights, bias: vec![0.0; f], stride, padding }
}

pub fn init_dense(i: usize, j: usize, rng: &mut ChaCha12Rng) -> DenseLayer {
    DenseLayer {
        weights: Tensor { data: glorot(rng, i, j, i * j), shape: vec![i, j] },
        bias: vec![0.0; j],
    }
}
