//! The resource-optimized 1D-CNN: architecture assembly, training, inference
//! and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use egw_nn::{
    init_conv1d, init_dense, Activation, BatchNormLayer, DropoutSpec, Layer, Model, NnError,
    Padding, Precision, Tensor, Trainer,
};

use crate::metrics::{metrics_from_confusion, Metrics};
use crate::{ArrhythmiaError, BeatRecord};

pub const NUM_CLASSES: usize = 5;

/// Class naming used throughout reports, indexed by label.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "normal",
    "fusion of paced and normal",
    "premature ventricular contraction",
    "atrial premature",
    "fusion of ventricular and normal",
];

/// Network configuration. Defaults mirror the published table: two identical
/// convolutional blocks of 64 kernels with receptive field 2 and stride 1,
/// dropout 0.4 and pool size 2, then one 512-neuron hidden layer with dropout
/// 0.2 and a 5-class output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Beat vector length (M).
    pub input_len: usize,
    /// Lead count (N); the evaluation data is single-lead.
    pub input_channels: usize,
    pub conv_filters: usize,
    pub receptive_field: usize,
    pub stride: usize,
    /// Drop probability applied after each convolutional activation.
    pub conv_dropout: f64,
    pub pool_size: usize,
    pub num_conv_layers: usize,
    pub fc_neurons: usize,
    /// Drop probability applied after the hidden fully-connected layer.
    pub fc_dropout: f64,
    pub output_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_len: 187,
            input_channels: 1,
            conv_filters: 64,
            receptive_field: 2,
            stride: 1,
            conv_dropout: 0.4,
            pool_size: 2,
            num_conv_layers: 2,
            fc_neurons: 512,
            fc_dropout: 0.2,
            output_classes: NUM_CLASSES,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ArrhythmiaError> {
        let positive = [
            ("input_len", self.input_len),
            ("input_channels", self.input_channels),
            ("conv_filters", self.conv_filters),
            ("receptive_field", self.receptive_field),
            ("stride", self.stride),
            ("pool_size", self.pool_size),
            ("num_conv_layers", self.num_conv_layers),
            ("fc_neurons", self.fc_neurons),
            ("output_classes", self.output_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ArrhythmiaError::Data(format!("config {name} must be positive")));
            }
        }
        for (name, p) in [("conv_dropout", self.conv_dropout), ("fc_dropout", self.fc_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(ArrhythmiaError::Data(format!(
                    "config {name} must be a drop probability in [0, 1), got {p}"
                )));
            }
        }
        if self.stride != 1 {
            // Same-padding convolutions keep R = M only for stride 1, which is
            // what the published configuration uses.
            return Err(ArrhythmiaError::Data(
                "config stride must be 1 for same-padded convolution blocks".into(),
            ));
        }
        Ok(())
    }

    /// Flattened feature count entering the first fully-connected layer.
    pub fn flattened_len(&self) -> usize {
        let mut len = self.input_len;
        for _ in 0..self.num_conv_layers {
            len = len.div_ceil(self.pool_size);
        }
        len * self.conv_filters
    }
}

/// Training hyperparameters. The published work leaves these unspecified;
/// defaults are 20 epochs, batch 64, learning rate 0.01, momentum 0.9 with a
/// 90/10 stratified train/validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub precision: Precision,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 7,
            validation_fraction: 0.1,
            precision: Precision::F64,
        }
    }
}

/// A trained network plus everything needed to reproduce and report on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub model: Model,
    pub seed: u64,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    /// Validation accuracy per epoch (empty when the split had no holdout).
    pub val_accuracy: Vec<f64>,
}

impl TrainedModel {
    /// Guard for pipelines built around a fixed class count.
    pub fn ensure_output_classes(&self, expected: usize) -> Result<(), ArrhythmiaError> {
        if self.config.output_classes != expected {
            return Err(ArrhythmiaError::ConfigMismatch {
                expected,
                found: self.config.output_classes,
            });
        }
        Ok(())
    }
}

/// Assemble the layer stack:
/// `[BatchNorm → Conv1d(same) → ReLU → Dropout → MaxPool] × num_conv_layers`
/// then `Flatten → Dense(fc_neurons) → LeakyReLU → Dropout → Dense(classes)`.
/// Softmax is applied by the loss during training and by `predict` at
/// inference.
pub fn build_model(config: &ModelConfig, rng: &mut ChaCha12Rng) -> Result<Model, ArrhythmiaError> {
    config.validate()?;
    let conv_drop = DropoutSpec::from_drop_probability(config.conv_dropout)?;
    let fc_drop = DropoutSpec::from_drop_probability(config.fc_dropout)?;

    let mut layers = Vec::new();
    let mut channels = config.input_channels;
    for _ in 0..config.num_conv_layers {
        layers.push(Layer::BatchNorm(BatchNormLayer::new(channels)));
        layers.push(Layer::Conv1d(init_conv1d(
            config.receptive_field,
            channels,
            config.conv_filters,
            config.stride,
            Padding::Same,
            rng,
        )));
        layers.push(Layer::Activation(Activation::Relu));
        layers.push(Layer::Dropout(conv_drop));
        layers.push(Layer::MaxPool { pool_size: config.pool_size });
        channels = config.conv_filters;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(init_dense(config.flattened_len(), config.fc_neurons, rng)));
    layers.push(Layer::Activation(Activation::LeakyRelu));
    layers.push(Layer::Dropout(fc_drop));
    layers.push(Layer::Dense(init_dense(config.fc_neurons, config.output_classes, rng)));
    Ok(Model::new(layers))
}

fn check_records(records: &[BeatRecord], config: &ModelConfig) -> Result<(), ArrhythmiaError> {
    if records.is_empty() {
        return Err(ArrhythmiaError::Data("no records".into()));
    }
    for (i, rec) in records.iter().enumerate() {
        if rec.samples.len() != config.input_len {
            return Err(ArrhythmiaError::Data(format!(
                "record {i}: {} samples, expected {}",
                rec.samples.len(),
                config.input_len
            )));
        }
        if rec.label as usize >= config.output_classes {
            return Err(ArrhythmiaError::Data(format!(
                "record {i}: label {} out of range for {} classes",
                rec.label, config.output_classes
            )));
        }
    }
    Ok(())
}

fn batch_tensor(records: &[BeatRecord], indices: &[usize], input_len: usize) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * input_len);
    for &i in indices {
        data.extend_from_slice(&records[i].samples);
    }
    // Single-lead input: shape [batch, M, 1].
    Tensor { data, shape: vec![indices.len(), input_len, 1] }
}

/// 90/10-style stratified split of index lists; classes with a single record
/// stay entirely in the training set.
fn stratified_split(
    records: &[BeatRecord],
    num_classes: usize,
    fraction: f64,
    rng: &mut ChaCha12Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, rec) in records.iter().enumerate() {
        by_class[rec.label as usize].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for ids in &mut by_class {
        ids.shuffle(rng);
        let mut n_val = (ids.len() as f64 * fraction).round() as usize;
        if n_val >= ids.len() {
            n_val = ids.len().saturating_sub(1);
        }
        val.extend_from_slice(&ids[..n_val]);
        train.extend_from_slice(&ids[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Train the configured network with cross-entropy + SGD. Deterministic for a
/// fixed seed; divergence (non-finite loss) is reported with the step index.
pub fn train_model(
    records: &[BeatRecord],
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<TrainedModel, ArrhythmiaError> {
    config.validate()?;
    check_records(records, config)?;
    if opts.batch_size == 0 || opts.epochs == 0 {
        return Err(ArrhythmiaError::Data("epochs and batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.validation_fraction) {
        return Err(ArrhythmiaError::Data("validation_fraction must lie in [0, 1)".into()));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let (train_idx, val_idx) =
        stratified_split(records, config.output_classes, opts.validation_fraction, &mut rng);
    let mut model = build_model(config, &mut rng)?.with_precision(opts.precision);
    let mut trainer = Trainer::new(opts.learning_rate, opts.momentum, rng.clone());

    let mut order = train_idx;
    let mut loss_history = Vec::with_capacity(opts.epochs);
    let mut val_accuracy = Vec::with_capacity(opts.epochs);
    for _epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let batch = batch_tensor(records, chunk, config.input_len);
            let labels: Vec<usize> = chunk.iter().map(|&i| records[i].label as usize).collect();
            let loss = trainer.step(&mut model, &batch, &labels).map_err(|e| match e {
                NnError::NonFiniteLoss { step } => ArrhythmiaError::Diverged { step },
                other => ArrhythmiaError::Network(other),
            })?;
            loss_sum += loss * chunk.len() as f64;
        }
        loss_history.push(loss_sum / order.len() as f64);
        if !val_idx.is_empty() {
            let mut correct = 0usize;
            for chunk in val_idx.chunks(256) {
                let preds = predict_indices(&model, records, chunk, config.input_len)?;
                correct += chunk
                    .iter()
                    .zip(&preds)
                    .filter(|(&i, &p)| records[i].label as usize == p)
                    .count();
            }
            val_accuracy.push(correct as f64 / val_idx.len() as f64);
        }
    }

    Ok(TrainedModel { config: config.clone(), model, seed: opts.seed, loss_history, val_accuracy })
}

fn predict_indices(
    model: &Model,
    records: &[BeatRecord],
    indices: &[usize],
    input_len: usize,
) -> Result<Vec<usize>, ArrhythmiaError> {
    let batch = batch_tensor(records, indices, input_len);
    let logits = model.infer(&batch)?;
    let (b, classes) = logits.dims2()?;
    Ok((0..b)
        .map(|bi| egw_nn::softmax_argmax(&logits.data[bi * classes..(bi + 1) * classes]))
        .collect())
}

/// Predicted labels for a record batch (inference mode: running batch-norm
/// statistics, no dropout).
pub fn predict(
    trained: &TrainedModel,
    records: &[BeatRecord],
) -> Result<Vec<u8>, ArrhythmiaError> {
    check_records(records, &trained.config)?;
    let all: Vec<usize> = (0..records.len()).collect();
    let mut out = Vec::with_capacity(records.len());
    for chunk in all.chunks(256) {
        let preds = predict_indices(&trained.model, records, chunk, trained.config.input_len)?;
        out.extend(preds.into_iter().map(|p| p as u8));
    }
    Ok(out)
}

/// Evaluate on a labelled test set: builds the confusion matrix and derives
/// per-class, macro and weighted metrics.
pub fn evaluate(
    trained: &TrainedModel,
    records: &[BeatRecord],
) -> Result<Metrics, ArrhythmiaError> {
    if records.is_empty() {
        return Err(ArrhythmiaError::Data("empty test set".into()));
    }
    let preds = predict(trained, records)?;
    let n = trained.config.output_classes;
    let mut matrix = vec![vec![0u64; n]; n];
    for (rec, &p) in records.iter().zip(&preds) {
        matrix[rec.label as usize][p as usize] += 1;
    }
    metrics_from_confusion(&matrix)
}
