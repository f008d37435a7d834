//! Named parameter store shared by every model.

use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use std::collections::BTreeMap;

/// All trainable tensors of a model, keyed by a stable dotted name
/// (`layer2.attn.head1.wq`, `maskpred0.w`, `head.b`, ...). BTreeMap keeps
/// iteration order deterministic for optimizer steps and checkpoints.
#[derive(Clone, Debug, Default)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    pub fn as_map(&self) -> &BTreeMap<String, Tensor> {
        &self.map
    }

    /// Register every parameter as a named leaf on the tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .map
            .iter()
            .map(|(name, t)| (name.clone(), tape.param(name, t.clone())))
            .collect();
        BoundParams { vars }
    }
}

impl FromIterator<(String, Tensor)> for Params {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Params {
            map: iter.into_iter().collect(),
        }
    }
}

/// Tape handles for a bound parameter set.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    /// Missing names are programming errors, not runtime conditions.
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }
}

/// Bind a plain map (used by gradient-check harnesses).
pub fn bind_map(tape: &mut Tape, map: &BTreeMap<String, Tensor>) -> BoundParams {
    let vars = map
        .iter()
        .map(|(name, t)| (name.clone(), tape.param(name, t.clone())))
        .collect();
    BoundParams { vars }
}

/// Xavier-uniform matrix: U(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
pub fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-r..r)).collect();
    Tensor::new(vec![rows, cols], data).expect("xavier shape")
}

/// Small uniform init for embedding tables.
pub fn embedding_init(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-0.05..0.05))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("embedding shape")
}

pub fn zeros_vec(len: usize) -> Tensor {
    Tensor::zeros(vec![len])
}

pub fn ones_vec(len: usize) -> Tensor {
    Tensor::vector(vec![1.0; len])
}
