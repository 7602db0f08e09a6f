//! Flat row-major tensor.

use serde::{Deserialize, Serialize};

use crate::NnError;

/// A dense row-major tensor; the last axis varies fastest. Convolutional data
/// uses `[batch, length, channels]`, dense data `[batch, width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self, NnError> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(NnError::InvalidParameter(format!("non-finite tensor value {bad}")));
        }
        Ok(Tensor { data, shape })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { data: vec![0.0; len], shape }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading axis, conventionally the batch dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize), NnError> {
        match self.shape.as_slice() {
            &[b, l, c] => Ok((b, l, c)),
            other => Err(NnError::ShapeMismatch(format!("expected 3-D tensor, got {other:?}"))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize), NnError> {
        match self.shape.as_slice() {
            &[b, w] => Ok((b, w)),
            other => Err(NnError::ShapeMismatch(format!("expected 2-D tensor, got {other:?}"))),
        }
    }
}
