//! Reverse accumulation over the tape.

use super::tape::{gelu_grad, mm, mm_nt, mm_tn, Op, Tape, Var, LAYER_NORM_EPS};
use super::{GradientMap, Tensor, TensorError};

impl Tape {
    /// Gradients of a scalar root with respect to every reachable named
    /// parameter. Deterministic: same tape, same result, bit for bit.
    pub fn backward(&self, root: Var) -> Result<GradientMap, TensorError> {
        let root_t = &self.nodes[root.0].out;
        if !root_t.is_scalar() {
            return Err(TensorError::NonScalarRoot(root_t.shape().to_vec()));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue, // not on a path to the root
            };
            self.accumulate_inputs(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut map = GradientMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { name: Some(name) } = &node.op {
                if let Some(g) = grads[idx].take() {
                    map.insert(name.clone(), Tensor::new(node.out.shape().to_vec(), g)?);
                }
            }
        }
        Ok(map)
    }

    fn grad_buf<'a>(
        &self,
        grads: &'a mut [Option<Vec<f64>>],
        v: Var,
    ) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].out.numel()]))
    }

    fn accumulate_inputs(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[idx].out;
        match &self.nodes[idx].op {
            Op::Leaf { .. } => {}

            Op::Add(a, b) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    for (x, y) in gb.iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }

            Op::Sub(a, b) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    for (x, y) in gb.iter_mut().zip(g) {
                        *x -= y;
                    }
                }
            }

            Op::Mul(a, b) => {
                let (ta, tb) = (self.nodes[a.0].out.data(), self.nodes[b.0].out.data());
                if self.nodes[a.0].requires_grad {
                    let ga = grads[a.0].get_or_insert_with(|| vec![0.0; ta.len()]);
                    for i in 0..g.len() {
                        ga[i] += g[i] * tb[i];
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let gb = grads[b.0].get_or_insert_with(|| vec![0.0; tb.len()]);
                    for i in 0..g.len() {
                        gb[i] += g[i] * ta[i];
                    }
                }
            }

            Op::MatMul(a, b) => {
                let ta = &self.nodes[a.0].out;
                let tb = &self.nodes[b.0].out;
                let (n, k) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let ga = grads[a.0].get_or_insert_with(|| vec![0.0; n * k]);
                    mm_nt(g, n, m, tb.data(), k, ga); // G · Bᵀ
                }
                if self.nodes[b.0].requires_grad {
                    let gb = grads[b.0].get_or_insert_with(|| vec![0.0; k * m]);
                    mm_tn(ta.data(), n, k, g, m, gb); // Aᵀ · G
                }
            }

            Op::MatMulNt(a, b) => {
                // C = A · Bᵀ, A: [n,k], B: [m,k], C/G: [n,m]
                let ta = &self.nodes[a.0].out;
                let tb = &self.nodes[b.0].out;
                let (n, k) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[0];
                if self.nodes[a.0].requires_grad {
                    let ga = grads[a.0].get_or_insert_with(|| vec![0.0; n * k]);
                    mm(g, n, m, tb.data(), k, ga); // G · B
                }
                if self.nodes[b.0].requires_grad {
                    let gb = grads[b.0].get_or_insert_with(|| vec![0.0; m * k]);
                    mm_tn(g, n, m, ta.data(), k, gb); // Gᵀ · A
                }
            }

            Op::AddRow(x, r) => {
                let d = self.nodes[r.0].out.numel();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (a, b) in gx.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                if let Some(gr) = self.grad_buf(grads, *r) {
                    for chunk in g.chunks(d) {
                        for (a, b) in gr.iter_mut().zip(chunk) {
                            *a += b;
                        }
                    }
                }
            }

            Op::MulRow(x, r) => {
                let tx = self.nodes[x.0].out.data();
                let tr = self.nodes[r.0].out.data();
                let d = tr.len();
                if self.nodes[x.0].requires_grad {
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; tx.len()]);
                    for (i, gv) in g.iter().enumerate() {
                        gx[i] += gv * tr[i % d];
                    }
                }
                if self.nodes[r.0].requires_grad {
                    let gr = grads[r.0].get_or_insert_with(|| vec![0.0; d]);
                    for (chunk, xchunk) in g.chunks(d).zip(tx.chunks(d)) {
                        for j in 0..d {
                            gr[j] += chunk[j] * xchunk[j];
                        }
                    }
                }
            }

            Op::ScaleRows(x, s) => {
                let tx = self.nodes[x.0].out.data();
                let ts = self.nodes[s.0].out.data();
                let d = tx.len() / ts.len();
                if self.nodes[x.0].requires_grad {
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; tx.len()]);
                    for (i, chunk) in g.chunks(d).enumerate() {
                        let si = ts[i];
                        for (j, gv) in chunk.iter().enumerate() {
                            gx[i * d + j] += gv * si;
                        }
                    }
                }
                if self.nodes[s.0].requires_grad {
                    let gs = grads[s.0].get_or_insert_with(|| vec![0.0; ts.len()]);
                    for (i, chunk) in g.chunks(d).enumerate() {
                        let xrow = &tx[i * d..(i + 1) * d];
                        gs[i] += chunk.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }

            Op::ScalarMul(x, c) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (a, b) in gx.iter_mut().zip(g) {
                        *a += b * c;
                    }
                }
            }

            Op::ScalarAdd(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (a, b) in gx.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }

            Op::MulScalarVar(x, s) => {
                let sv = self.nodes[s.0].out.item();
                let tx = self.nodes[x.0].out.data();
                if self.nodes[x.0].requires_grad {
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; tx.len()]);
                    for (a, b) in gx.iter_mut().zip(g) {
                        *a += b * sv;
                    }
                }
                if self.nodes[s.0].requires_grad {
                    let gs = grads[s.0].get_or_insert_with(|| vec![0.0; 1]);
                    gs[0] += g.iter().zip(tx).map(|(a, b)| a * b).sum::<f64>();
                }
            }

            Op::Recip(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (i, gv) in g.iter().enumerate() {
                        let y = out.data()[i];
                        gx[i] -= gv * y * y;
                    }
                }
            }

            Op::RowSoftmax(x) => {
                if self.nodes[x.0].requires_grad {
                    let d = out.shape()[1];
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; out.numel()]);
                    for (i, (grow, yrow)) in g.chunks(d).zip(out.data().chunks(d)).enumerate() {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            gx[i * d + j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }

            Op::LayerNorm(x) => {
                if self.nodes[x.0].requires_grad {
                    let tx = &self.nodes[x.0].out;
                    let d = tx.shape()[1];
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; tx.numel()]);
                    for (i, (grow, xrow)) in g.chunks(d).zip(tx.data().chunks(d)).enumerate() {
                        let mean = xrow.iter().sum::<f64>() / d as f64;
                        let var =
                            xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let yrow = &out.data()[i * d..(i + 1) * d];
                        let g_mean = grow.iter().sum::<f64>() / d as f64;
                        let gy_mean =
                            grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[i * d + j] += inv_std * (grow[j] - g_mean - yrow[j] * gy_mean);
                        }
                    }
                }
            }

            Op::Gelu(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let tx = self.nodes[x.0].out.data();
                    for (i, gv) in g.iter().enumerate() {
                        gx[i] += gv * gelu_grad(tx[i]);
                    }
                }
            }

            Op::SumAll(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for a in gx.iter_mut() {
                        *a += g[0];
                    }
                }
            }

            Op::MeanAll(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let inv = 1.0 / gx.len() as f64;
                    for a in gx.iter_mut() {
                        *a += g[0] * inv;
                    }
                }
            }

            Op::SumAxis0(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let d = g.len();
                    for chunk in gx.chunks_mut(d) {
                        for (a, b) in chunk.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                }
            }

            Op::Abs(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let tx = self.nodes[x.0].out.data();
                    for (i, gv) in g.iter().enumerate() {
                        // Subgradient at 0 is 0.
                        let s = if tx[i] > 0.0 {
                            1.0
                        } else if tx[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        gx[i] += gv * s;
                    }
                }
            }

            Op::Exp(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (i, gv) in g.iter().enumerate() {
                        gx[i] += gv * out.data()[i];
                    }
                }
            }

            Op::Log(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let tx = self.nodes[x.0].out.data();
                    for (i, gv) in g.iter().enumerate() {
                        gx[i] += gv / tx[i];
                    }
                }
            }

            Op::Embed { table, ids } => {
                if self.nodes[table.0].requires_grad {
                    let tt = &self.nodes[table.0].out;
                    let d = tt.shape()[1];
                    let gt = grads[table.0].get_or_insert_with(|| vec![0.0; tt.numel()]);
                    for (i, &id) in ids.iter().enumerate() {
                        let grow = &g[i * d..(i + 1) * d];
                        let trow = &mut gt[id * d..(id + 1) * d];
                        for (a, b) in trow.iter_mut().zip(grow) {
                            *a += b;
                        }
                    }
                }
            }

            Op::ConcatCols(parts) => {
                let n = out.shape()[0];
                let total = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let d = self.nodes[p.0].out.shape()[1];
                    if self.nodes[p.0].requires_grad {
                        let gp = grads[p.0].get_or_insert_with(|| vec![0.0; n * d]);
                        for i in 0..n {
                            let src = &g[i * total + offset..i * total + offset + d];
                            let dst = &mut gp[i * d..(i + 1) * d];
                            for (a, b) in dst.iter_mut().zip(src) {
                                *a += b;
                            }
                        }
                    }
                    offset += d;
                }
            }

            Op::MaskedFillCols { x, keep } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let d = keep.len();
                    for (i, gv) in g.iter().enumerate() {
                        if keep[i % d] != 0.0 {
                            gx[i] += gv;
                        }
                    }
                }
            }

            Op::LogSumExp(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let tx = self.nodes[x.0].out.data();
                    let lse = out.item();
                    for (i, a) in gx.iter_mut().enumerate() {
                        *a += g[0] * (tx[i] - lse).exp();
                    }
                }
            }

            Op::SelectIndex(x, index) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    gx[*index] += g[0];
                }
            }

            Op::SelectColumn(x, col) => {
                if self.nodes[x.0].requires_grad {
                    let tx = &self.nodes[x.0].out;
                    let d = tx.shape()[1];
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; tx.numel()]);
                    for (i, gv) in g.iter().enumerate() {
                        gx[i * d + col] += gv;
                    }
                }
            }

            Op::AdjacentDiff(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (i, gv) in g.iter().enumerate() {
                        gx[i + 1] += gv;
                        gx[i] -= gv;
                    }
                }
            }

            Op::HardThresholdSt(x) | Op::ClampSt(x) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (a, b) in gx.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
        }
    }
}
