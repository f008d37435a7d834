//! Dense f64 tensors with a tape-based reverse-mode gradient engine.
//!
//! The tape records every operation eagerly during the forward pass and
//! replays it in reverse to accumulate gradients for named parameters.
//! Everything is 64-bit: at desk scale speed is irrelevant and the
//! finite-difference checks need the headroom.

mod backward;
mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, grad_check_named};
pub use tape::{Tape, Var};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum TensorError {
    #[error("shape {shape:?} does not match {len} data values")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadRank {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("non-finite value produced by node #{node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("embedding id {id} out of range (table has {rows} rows)")]
    EmbedOutOfRange { id: usize, rows: usize },
    #[error("{op}: index {index} out of bounds for length {len}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("grad_check epsilon must lie in (0, 1e-2], got {0}")]
    BadEpsilon(f64),
}

/// Dense row-major tensor. Rank 1 and 2 cover everything this crate needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.data[0]
    }

    /// Rows of a rank-2 tensor (rank-1 counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Columns of a rank-2 tensor, or the length of a rank-1 tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            _ => self.data.len(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        // A single NaN or ±Inf poisons the sum, so one pass suffices.
        self.data.iter().sum::<f64>().is_finite()
    }
}

/// Gradients keyed by parameter name, shapes matching the parameters.
#[derive(Clone, Debug, Default)]
pub struct GradientMap {
    grads: BTreeMap<String, Tensor>,
}

impl GradientMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn insert(&mut self, name: String, grad: Tensor) {
        self.grads.insert(name, grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Elementwise accumulate another map into this one.
    pub fn accumulate(&mut self, other: &GradientMap) {
        for (name, grad) in other.grads.iter() {
            match self.grads.get_mut(name) {
                Some(acc) => {
                    for (a, g) in acc.data.iter_mut().zip(grad.data.iter()) {
                        *a += g;
                    }
                }
                None => {
                    self.grads.insert(name.clone(), grad.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for grad in self.grads.values_mut() {
            for g in grad.data.iter_mut() {
                *g *= factor;
            }
        }
    }

    /// Global L2 norm over all gradients.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|t| t.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}
