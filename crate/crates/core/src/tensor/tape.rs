//! Eager computation tape: every op evaluates immediately and records
//! itself for the backward pass. Tape order is topological by construction.

use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(super) usize);

#[derive(Debug)]
pub(super) enum Op {
    Leaf { name: Option<String> },
    MatMul(Var, Var),
    /// A · Bᵀ with B stored row-major [m, k].
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// [n, d] + broadcast row [d].
    AddRow(Var, Var),
    /// [n, d] ⊙ broadcast row [d].
    MulRow(Var, Var),
    /// Row i of [n, d] scaled by s[i]; s has length n.
    ScaleRows(Var, Var),
    ScalarMul(Var, f64),
    ScalarAdd(Var),
    /// Every element multiplied by a 1-element variable.
    MulScalarVar(Var, Var),
    Recip(Var),
    RowSoftmax(Var),
    LayerNorm(Var),
    Gelu(Var),
    SumAll(Var),
    MeanAll(Var),
    /// Column sums: [n, d] → [1, d].
    SumAxis0(Var),
    Abs(Var),
    Exp(Var),
    Log(Var),
    Embed { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    /// Columns with keep[j] == 0 are overwritten by the fill constant.
    /// Overwrite, not additive bias: downstream values must not depend on
    /// masked scores even at the last bit.
    MaskedFillCols { x: Var, keep: Vec<f64> },
    LogSumExp(Var),
    SelectIndex(Var, usize),
    SelectColumn(Var, usize),
    /// out[i] = x[i+1] - x[i].
    AdjacentDiff(Var),
    /// Forward: x >= 0.5 → 1 else 0. Backward: identity (straight-through).
    HardThresholdSt(Var),
    /// Forward: clamp into [lo, hi]. Backward: identity (straight-through),
    /// so forces keep acting on parameters pressed against the bound.
    ClampSt(Var),
}

impl Op {
    pub(super) fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul-nt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add-row",
            Op::MulRow(..) => "mul-row",
            Op::ScaleRows(..) => "scale-rows",
            Op::ScalarMul(..) => "scalar-mul",
            Op::ScalarAdd(..) => "scalar-add",
            Op::MulScalarVar(..) => "mul-scalar-var",
            Op::Recip(..) => "recip",
            Op::RowSoftmax(..) => "row-softmax",
            Op::LayerNorm(..) => "layer-norm",
            Op::Gelu(..) => "gelu",
            Op::SumAll(..) => "sum",
            Op::MeanAll(..) => "mean",
            Op::SumAxis0(..) => "sum-axis0",
            Op::Abs(..) => "abs",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Embed { .. } => "embedding-lookup",
            Op::ConcatCols(..) => "concat",
            Op::MaskedFillCols { .. } => "masked-fill",
            Op::LogSumExp(..) => "log-sum-exp",
            Op::SelectIndex(..) => "select-index",
            Op::SelectColumn(..) => "select-column",
            Op::AdjacentDiff(..) => "adjacent-diff",
            Op::HardThresholdSt(..) => "hard-threshold-st",
            Op::ClampSt(..) => "clamp-st",
        }
    }
}

pub(super) struct Node {
    pub op: Op,
    pub out: Tensor,
    pub requires_grad: bool,
}

/// Single-owner computation tape. Graphs are built and consumed by one
/// training step; evaluated tensors may be read freely afterwards.
#[derive(Default)]
pub struct Tape {
    pub(super) nodes: Vec<Node>,
}

pub(super) const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].out
    }

    /// Non-differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_unchecked(Op::Leaf { name: None }, t, false)
    }

    /// Named differentiable parameter leaf.
    pub fn param(&mut self, name: &str, t: Tensor) -> Var {
        self.push_unchecked(
            Op::Leaf {
                name: Some(name.to_string()),
            },
            t,
            true,
        )
    }

    fn push_unchecked(&mut self, op: Op, out: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            out,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, out: Tensor, requires_grad: bool) -> Result<Var, TensorError> {
        if !out.all_finite() {
            return Err(TensorError::NonFinite {
                node: self.nodes.len(),
                op: op.name(),
            });
        }
        Ok(self.push_unchecked(op, out, requires_grad))
    }

    fn t(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].out
    }

    // ── binary elementwise ───────────────────────────────────────────

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.t(a).shape() != self.t(b).shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.t(a).shape().to_vec(),
                rhs: self.t(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let data = self
            .t(a)
            .data()
            .iter()
            .zip(self.t(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(self.t(a).shape().to_vec(), data)?;
        let rg = self.requires(a) || self.requires(b);
        self.push(Op::Add(a, b), out, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let data = self
            .t(a)
            .data()
            .iter()
            .zip(self.t(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(self.t(a).shape().to_vec(), data)?;
        let rg = self.requires(a) || self.requires(b);
        self.push(Op::Sub(a, b), out, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let data = self
            .t(a)
            .data()
            .iter()
            .zip(self.t(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(self.t(a).shape().to_vec(), data)?;
        let rg = self.requires(a) || self.requires(b);
        self.push(Op::Mul(a, b), out, rg)
    }

    // ── matrix products ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.t(a), self.t(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; n * m];
        mm(ta.data(), n, k, tb.data(), m, &mut out);
        let out = Tensor::new(vec![n, m], out)?;
        let rg = self.requires(a) || self.requires(b);
        self.push(Op::MatMul(a, b), out, rg)
    }

    /// A · Bᵀ; rows of both operands stay contiguous, which is what the
    /// attention score computation wants.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.t(a), self.t(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[1] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul-nt",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[0]);
        let mut out = vec![0.0; n * m];
        mm_nt(ta.data(), n, k, tb.data(), m, &mut out);
        let out = Tensor::new(vec![n, m], out)?;
        let rg = self.requires(a) || self.requires(b);
        self.push(Op::MatMulNt(a, b), out, rg)
    }

    // ── broadcasts ───────────────────────────────────────────────────

    fn row_broadcast_check(
        &self,
        op: &'static str,
        x: Var,
        r: Var,
    ) -> Result<(usize, usize), TensorError> {
        let (tx, tr) = (self.t(x), self.t(r));
        if tx.shape().len() != 2 || tr.shape().len() != 1 || tr.shape()[0] != tx.shape()[1] {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: tx.shape().to_vec(),
                rhs: tr.shape().to_vec(),
            });
        }
        Ok((tx.shape()[0], tx.shape()[1]))
    }

    pub fn add_row(&mut self, x: Var, r: Var) -> Result<Var, TensorError> {
        let (n, d) = self.row_broadcast_check("add-row", x, r)?;
        let mut data = self.t(x).data().to_vec();
        let row = self.t(r).data();
        for chunk in data.chunks_mut(d) {
            for (c, v) in chunk.iter_mut().zip(row) {
                *c += v;
            }
        }
        let out = Tensor::new(vec![n, d], data)?;
        let rg = self.requires(x) || self.requires(r);
        self.push(Op::AddRow(x, r), out, rg)
    }

    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var, TensorError> {
        let (n, d) = self.row_broadcast_check("mul-row", x, r)?;
        let mut data = self.t(x).data().to_vec();
        let row = self.t(r).data();
        for chunk in data.chunks_mut(d) {
            for (c, v) in chunk.iter_mut().zip(row) {
                *c *= v;
            }
        }
        let out = Tensor::new(vec![n, d], data)?;
        let rg = self.requires(x) || self.requires(r);
        self.push(Op::MulRow(x, r), out, rg)
    }

    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var, TensorError> {
        let (tx, ts) = (self.t(x), self.t(s));
        if tx.shape().len() != 2 || ts.shape().len() != 1 || ts.shape()[0] != tx.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "scale-rows",
                lhs: tx.shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let (n, d) = (tx.shape()[0], tx.shape()[1]);
        let mut data = tx.data().to_vec();
        let scales = ts.data();
        for (i, chunk) in data.chunks_mut(d).enumerate() {
            let si = scales[i];
            for c in chunk.iter_mut() {
                *c *= si;
            }
        }
        let out = Tensor::new(vec![n, d], data)?;
        let rg = self.requires(x) || self.requires(s);
        self.push(Op::ScaleRows(x, s), out, rg)
    }

    // ── scalar arithmetic ────────────────────────────────────────────

    pub fn scalar_mul(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|v| v * c).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::ScalarMul(x, c), out, rg)
    }

    pub fn scalar_add(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|v| v + c).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::ScalarAdd(x), out, rg)
    }

    pub fn mul_scalar_var(&mut self, x: Var, s: Var) -> Result<Var, TensorError> {
        if !self.t(s).is_scalar() {
            return Err(TensorError::BadRank {
                op: "mul-scalar-var",
                expected: "a 1-element scalar",
                got: self.t(s).shape().to_vec(),
            });
        }
        let sv = self.t(s).item();
        let data = self.t(x).data().iter().map(|v| v * sv).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x) || self.requires(s);
        self.push(Op::MulScalarVar(x, s), out, rg)
    }

    // ── elementwise maps ─────────────────────────────────────────────

    pub fn recip(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|v| 1.0 / v).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::Recip(x), out, rg)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|v| v.abs()).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::Abs(x), out, rg)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|v| v.exp()).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::Exp(x), out, rg)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|v| v.ln()).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::Log(x), out, rg)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.t(x).data().iter().map(|&v| gelu(v)).collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::Gelu(x), out, rg)
    }

    // ── normalizations ───────────────────────────────────────────────

    pub fn row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if tx.shape().len() != 2 {
            return Err(TensorError::BadRank {
                op: "row-softmax",
                expected: "a rank-2 tensor",
                got: tx.shape().to_vec(),
            });
        }
        let (n, d) = (tx.shape()[0], tx.shape()[1]);
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let out = Tensor::new(vec![n, d], data)?;
        let rg = self.requires(x);
        self.push(Op::RowSoftmax(x), out, rg)
    }

    /// Per-row normalization without affine terms. Variance carries a
    /// +1e-5 stabilizer, so constant rows map to zeros rather than erroring.
    pub fn layer_norm(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if tx.shape().len() != 2 {
            return Err(TensorError::BadRank {
                op: "layer-norm",
                expected: "a rank-2 tensor",
                got: tx.shape().to_vec(),
            });
        }
        let (n, d) = (tx.shape()[0], tx.shape()[1]);
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_std;
            }
        }
        let out = Tensor::new(vec![n, d], data)?;
        let rg = self.requires(x);
        self.push(Op::LayerNorm(x), out, rg)
    }

    // ── reductions ───────────────────────────────────────────────────

    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = Tensor::scalar(self.t(x).data().iter().sum());
        let rg = self.requires(x);
        self.push(Op::SumAll(x), out, rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let n = self.t(x).numel() as f64;
        let out = Tensor::scalar(self.t(x).data().iter().sum::<f64>() / n);
        let rg = self.requires(x);
        self.push(Op::MeanAll(x), out, rg)
    }

    pub fn sum_axis0(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if tx.shape().len() != 2 {
            return Err(TensorError::BadRank {
                op: "sum-axis0",
                expected: "a rank-2 tensor",
                got: tx.shape().to_vec(),
            });
        }
        let (_, d) = (tx.shape()[0], tx.shape()[1]);
        let mut acc = vec![0.0; d];
        for row in tx.data().chunks(d) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let out = Tensor::new(vec![1, d], acc)?;
        let rg = self.requires(x);
        self.push(Op::SumAxis0(x), out, rg)
    }

    /// Numerically stable log Σ exp over a flat tensor → scalar.
    pub fn log_sum_exp(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self.t(x).data();
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = data.iter().map(|v| (v - max).exp()).sum();
        let out = Tensor::scalar(max + sum.ln());
        let rg = self.requires(x);
        self.push(Op::LogSumExp(x), out, rg)
    }

    // ── structural ops ───────────────────────────────────────────────

    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tt = self.t(table);
        if tt.shape().len() != 2 {
            return Err(TensorError::BadRank {
                op: "embedding-lookup",
                expected: "a rank-2 table",
                got: tt.shape().to_vec(),
            });
        }
        let (rows, d) = (tt.shape()[0], tt.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::EmbedOutOfRange { id, rows });
            }
            data.extend_from_slice(tt.row(id));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        let rg = self.requires(table);
        self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            out,
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let n = self.t(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let tp = self.t(p);
            if tp.shape().len() != 2 || tp.shape()[0] != n {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: self.t(parts[0]).shape().to_vec(),
                    rhs: tp.shape().to_vec(),
                });
            }
            total += tp.shape()[1];
        }
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.t(p).row(i));
            }
        }
        let out = Tensor::new(vec![n, total], data)?;
        let rg = parts.iter().any(|&p| self.requires(p));
        self.push(Op::ConcatCols(parts.to_vec()), out, rg)
    }

    pub fn masked_fill_cols(&mut self, x: Var, keep: &[f64], fill: f64) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if tx.shape().len() != 2 || tx.shape()[1] != keep.len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked-fill",
                lhs: tx.shape().to_vec(),
                rhs: vec![keep.len()],
            });
        }
        let d = tx.shape()[1];
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            for (v, &k) in row.iter_mut().zip(keep) {
                if k == 0.0 {
                    *v = fill;
                }
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(
            Op::MaskedFillCols {
                x,
                keep: keep.to_vec(),
            },
            out,
            rg,
        )
    }

    pub fn select_index(&mut self, x: Var, index: usize) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if index >= tx.numel() {
            return Err(TensorError::IndexOutOfBounds {
                op: "select-index",
                index,
                len: tx.numel(),
            });
        }
        let out = Tensor::scalar(tx.data()[index]);
        let rg = self.requires(x);
        self.push(Op::SelectIndex(x, index), out, rg)
    }

    pub fn select_column(&mut self, x: Var, col: usize) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if tx.shape().len() != 2 || col >= tx.shape()[1] {
            return Err(TensorError::IndexOutOfBounds {
                op: "select-column",
                index: col,
                len: tx.shape().get(1).copied().unwrap_or(0),
            });
        }
        let (n, d) = (tx.shape()[0], tx.shape()[1]);
        let data = (0..n).map(|i| tx.data()[i * d + col]).collect();
        let out = Tensor::new(vec![n], data)?;
        let rg = self.requires(x);
        self.push(Op::SelectColumn(x, col), out, rg)
    }

    pub fn adjacent_diff(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.t(x);
        if tx.shape().len() != 1 {
            return Err(TensorError::BadRank {
                op: "adjacent-diff",
                expected: "a rank-1 tensor",
                got: tx.shape().to_vec(),
            });
        }
        let n = tx.numel();
        let data: Vec<f64> = (0..n.saturating_sub(1))
            .map(|i| tx.data()[i + 1] - tx.data()[i])
            .collect();
        let out = Tensor::new(vec![n.saturating_sub(1)], data)?;
        let rg = self.requires(x);
        self.push(Op::AdjacentDiff(x), out, rg)
    }

    /// Straight-through clamp into [lo, hi].
    pub fn clamp_st(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        let data = self
            .t(x)
            .data()
            .iter()
            .map(|&v| v.clamp(lo, hi))
            .collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::ClampSt(x), out, rg)
    }

    /// Straight-through binarization: {0,1} forward by thresholding at 0.5
    /// (ties keep), identity backward.
    pub fn hard_threshold_st(&mut self, x: Var) -> Result<Var, TensorError> {
        let data = self
            .t(x)
            .data()
            .iter()
            .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
            .collect();
        let out = Tensor::new(self.t(x).shape().to_vec(), data)?;
        let rg = self.requires(x);
        self.push(Op::HardThresholdSt(x), out, rg)
    }
}

pub(super) fn gelu(x: f64) -> f64 {
    // tanh form; smooth everywhere, which the finite-difference checks need.
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

pub(super) fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// out[n×m] += a[n×k] · b[k×m]
pub(super) fn mm(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// out[n×m] += a[n×k] · b[m×k]ᵀ
pub(super) fn mm_nt(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            *o += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// out[n×m] += a[k×n]ᵀ · b[k×m]
pub(super) fn mm_tn(a: &[f64], k: usize, n: usize, b: &[f64], m: usize, out: &mut [f64]) {
    for r in 0..k {
        let arow = &a[r * n..(r + 1) * n];
        let brow = &b[r * m..(r + 1) * m];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
