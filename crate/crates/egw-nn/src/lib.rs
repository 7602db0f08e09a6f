//! A small, explicit 1-D convolutional network stack: convolution, batch
//! normalization, max-pooling, dense layers, activations, dropout, softmax —
//! each with hand-written forward and backward passes — plus plain SGD with
//! optional momentum.
//!
//! Everything computes in `f64`. A reduced-precision mode rounds parameters
//! and activations through `f32` at layer boundaries for deployments that
//! trade accuracy for space, while keeping a single code path.
//!
//! Forward operations are pure; training mutates a [`Model`] and must be
//! externally serialized (one [`Trainer`] per model at a time).

mod model;
mod ops;
mod tensor;

pub use model::{
    backward_and_sgd_step, cross_entropy_with_logits, init_conv1d, init_dense, Layer, Model,
    Precision, Trainer,
};
pub use ops::{
    batchnorm_forward, conv1d_forward, conv_output_size, dense_forward, dropout, eq2_output_size,
    leaky_relu, maxpool1d, relu, softmax, softmax_argmax, Activation, BatchNormLayer, Conv1dLayer,
    DenseLayer, DropoutSpec, Mode, Padding,
};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("batchnorm inference requested before any training update")]
    NotTrained,
    #[error("training diverged: loss is not finite at step {step}")]
    NonFiniteLoss { step: u64 },
}
