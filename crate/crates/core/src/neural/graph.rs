//! Tape-based reverse-mode differentiation over 2-D f64 tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass. Model
//! parameters are borrowed from a [`ParamStore`]; each parameter gets exactly
//! one leaf node per graph so its gradient is read back from a single slot.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{matmul, matmul_at, matmul_bt};
use super::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Row-major `(rows, cols)` attention mask; `true` blocks a position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnMask {
    pub rows: usize,
    pub cols: usize,
    pub blocked: Vec<bool>,
}

impl AttnMask {
    /// Lower-triangular mask: position `i` may attend to `0..=i`.
    pub fn causal(len: usize) -> Self {
        let blocked = (0..len * len).map(|k| k % len > k / len).collect();
        Self {
            rows: len,
            cols: len,
            blocked,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    MeanRows(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Option<Tensor>,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor> {
        self.grads[node.0].as_ref()
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            dropout: None,
        }
    }

    /// Enables training-mode dropout with probability `p`, seeded.
    pub fn with_dropout(mut self, p: f64, seed: u64) -> Self {
        if p > 0.0 {
            self.dropout = Some((p, ChaCha8Rng::seed_from_u64(seed)));
        }
        self
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn grad_of(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(pid), _) => self.store.get(*pid),
            (_, Some(v)) => v,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, false)
    }

    /// Input whose gradient is wanted (used by gradient checks).
    pub fn variable(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, true)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes.get(&id) {
            return *node;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, node);
        node
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = self.value(id);
        (v.rows(), v.cols())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let g = self.grad_of(&[a, b]);
        self.push(Op::MatMul(a, b), Tensor::matrix(m, n, out), g)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        assert_eq!(k, k2, "matmul_bt inner dims {k} vs {k2}");
        let out = matmul_bt(self.value(a).data(), self.value(b).data(), m, k, n);
        let g = self.grad_of(&[a, b]);
        self.push(Op::MatMulBt(a, b), Tensor::matrix(m, n, out), g)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shapes");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let g = self.grad_of(&[a, b]);
        self.push(Op::Add(a, b), out, g)
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (m, n) = self.dims(x);
        let b = self.value(bias);
        assert_eq!(b.len(), n, "bias width");
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        let g = self.grad_of(&[x, bias]);
        self.push(Op::AddBias(x, bias), Tensor::matrix(m, n, data), g)
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a * s).collect();
        let out = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let g = self.grad_of(&[x]);
        self.push(Op::Scale(x, s), out, g)
    }

    /// Which side of zero every ReLU input in the graph fell on, in node
    /// order. Two forward passes with different patterns straddle a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.value(x).data().iter().map(|v| *v > 0.0))
            .collect()
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a.max(0.0)).collect();
        let out = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let g = self.grad_of(&[x]);
        self.push(Op::Relu(x), out, g)
    }

    /// Row-wise softmax. Blocked positions get weight 0; a fully blocked row
    /// is all zeros.
    pub fn softmax(&mut self, x: NodeId, mask: Option<&AttnMask>) -> NodeId {
        let (m, n) = self.dims(x);
        if let Some(mask) = mask {
            assert_eq!((mask.rows, mask.cols), (m, n), "mask shape");
        }
        let src = self.value(x).data();
        let mut out = vec![0.0f64; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let open = |c: usize| mask.is_none_or(|mk| !mk.blocked[r * n + c]);
            let max = (0..n)
                .filter(|&c| open(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let dst = &mut out[r * n..(r + 1) * n];
            let mut sum = 0.0f64;
            for c in 0..n {
                if open(c) {
                    dst[c] = (row[c] - max).exp();
                    sum += dst[c];
                }
            }
            for v in dst.iter_mut() {
                *v /= sum;
            }
        }
        let g = self.grad_of(&[x]);
        self.push(Op::Softmax(x), Tensor::matrix(m, n, out), g)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (m, n) = self.dims(x);
        let src = self.value(x).data();
        let gm = self.value(gamma).data();
        let bt = self.value(beta).data();
        assert_eq!(gm.len(), n);
        assert_eq!(bt.len(), n);
        let mut xhat = vec![0.0f64; m * n];
        let mut inv_std = vec![0.0f64; m];
        let mut out = vec![0.0f64; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = gm[c] * h + bt[c];
            }
        }
        let g = self.grad_of(&[x, gamma, beta]);
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            Tensor::matrix(m, n, out),
            g,
        )
    }

    /// Row lookup into an embedding table.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let (rows, n) = self.dims(table);
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            assert!(id < rows, "embedding id {id} out of range {rows}");
            out.extend_from_slice(&t[id * n..(id + 1) * n]);
        }
        let g = self.grad_of(&[table]);
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            Tensor::matrix(ids.len(), n, out),
            g,
        )
    }

    /// Inverted dropout in training mode; identity otherwise.
    pub fn dropout(&mut self, x: NodeId) -> NodeId {
        if self.dropout.is_none() {
            return x;
        }
        let len = self.value(x).len();
        let (p, rng) = self.dropout.as_mut().expect("checked above");
        let p = *p;
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let g = self.grad_of(&[x]);
        self.push(Op::Dropout { x, mask }, out, g)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> NodeId {
        let (m, n) = self.dims(x);
        assert!(start + width <= n, "column slice out of range");
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + start + width]);
        }
        let g = self.grad_of(&[x]);
        self.push(Op::SliceCols { x, start }, Tensor::matrix(m, width, out), g)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let m = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|p| self.dims(*p).1).collect();
        assert!(parts.iter().all(|p| self.dims(*p).0 == m), "concat_cols rows");
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let g = self.grad_of(parts);
        self.push(Op::ConcatCols(parts.to_vec()), Tensor::matrix(m, n, out), g)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let n = self.dims(parts[0]).1;
        assert!(parts.iter().all(|p| self.dims(*p).1 == n), "concat_rows cols");
        let mut out = Vec::new();
        let mut m = 0;
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
            m += self.dims(*p).0;
        }
        let g = self.grad_of(parts);
        self.push(Op::ConcatRows(parts.to_vec()), Tensor::matrix(m, n, out), g)
    }

    /// Mean over rows: `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let (m, n) = self.dims(x);
        let src = self.value(x).data();
        let mut out = vec![0.0f64; n];
        for row in src.chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let g = self.grad_of(&[x]);
        self.push(Op::MeanRows(x), Tensor::matrix(1, n, out), g)
    }

    /// Mean negative log-likelihood over rows whose target is `Some`.
    /// Returns `None` when every row is ignored.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<usize>]) -> Option<NodeId> {
        let (m, n) = self.dims(logits);
        assert_eq!(m, targets.len(), "one target per logit row");
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return None;
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0f64; m * n];
        let mut loss = 0.0f64;
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            for c in 0..n {
                probs[r * n + c] = (row[c] - log_z).exp();
            }
            if let Some(t) = targets[r] {
                assert!(t < n, "target {t} out of range {n}");
                loss += log_z - row[t];
            }
        }
        let value = Tensor::vector(vec![loss / count as f64]);
        let g = self.grad_of(&[logits]);
        Some(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            value,
            g,
        ))
    }

    /// Backpropagates from `output`, seeding its gradient with ones.
    pub fn backward(&self, output: NodeId) -> Gradients {
        let seed = Tensor::full(self.value(output).shape(), 1.0);
        self.backward_with(output, seed)
    }

    /// Backpropagates from `output` with an explicit upstream gradient.
    pub fn backward_with(&self, output: NodeId, seed: Tensor) -> Gradients {
        assert_eq!(seed.len(), self.value(output).len(), "seed shape");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, NodeId(idx), &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: NodeId, delta: Tensor) {
        if !self.nodes[target.0].needs_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn shaped_like(&self, id: NodeId, data: Vec<f64>) -> Tensor {
        Tensor::new(self.value(id).shape().to_vec(), data).expect("gradient matches value shape")
    }

    fn propagate(&self, op: &Op, this: NodeId, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let dy = grad.data();
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if self.nodes[a.0].needs_grad {
                    let da = matmul_bt(dy, self.value(*b).data(), m, n, k);
                    self.accumulate(grads, *a, self.shaped_like(*a, da));
                }
                if self.nodes[b.0].needs_grad {
                    let db = matmul_at(self.value(*a).data(), dy, m, k, n);
                    self.accumulate(grads, *b, self.shaped_like(*b, db));
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                if self.nodes[a.0].needs_grad {
                    let da = matmul(dy, self.value(*b).data(), m, n, k);
                    self.accumulate(grads, *a, self.shaped_like(*a, da));
                }
                if self.nodes[b.0].needs_grad {
                    let db = matmul_at(dy, self.value(*a).data(), m, n, k);
                    self.accumulate(grads, *b, self.shaped_like(*b, db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, grad.clone());
                self.accumulate(grads, *b, grad.clone());
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, grad.clone());
                if self.nodes[bias.0].needs_grad {
                    let n = grad.cols();
                    let mut db = vec![0.0f64; n];
                    for row in dy.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *bias, self.shaped_like(*bias, db));
                }
            }
            Op::Scale(x, s) => {
                let d = dy.iter().map(|v| v * s).collect();
                self.accumulate(grads, *x, self.shaped_like(*x, d));
            }
            Op::Relu(x) => {
                let y = self.value(this).data();
                let d = dy.iter().zip(y).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
                self.accumulate(grads, *x, self.shaped_like(*x, d));
            }
            Op::Softmax(x) => {
                let y = self.value(this);
                let n = y.cols();
                let mut d = vec![0.0f64; y.len()];
                for ((drow, yrow), grow) in d.chunks_mut(n).zip(y.data().chunks(n)).zip(dy.chunks(n)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        drow[c] = yrow[c] * (grow[c] - dot);
                    }
                }
                self.accumulate(grads, *x, self.shaped_like(*x, d));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = grad.cols();
                let gm = self.value(*gamma).data();
                let mut dgamma = vec![0.0f64; n];
                let mut dbeta = vec![0.0f64; n];
                let mut dx = vec![0.0f64; dy.len()];
                for (r, grow) in dy.chunks(n).enumerate() {
                    let hrow = &xhat[r * n..(r + 1) * n];
                    let mut sum_dh = 0.0f64;
                    let mut sum_dh_h = 0.0f64;
                    for c in 0..n {
                        dgamma[c] += grow[c] * hrow[c];
                        dbeta[c] += grow[c];
                        let dh = grow[c] * gm[c];
                        sum_dh += dh;
                        sum_dh_h += dh * hrow[c];
                    }
                    let scale = inv_std[r] / n as f64;
                    for c in 0..n {
                        let dh = grow[c] * gm[c];
                        dx[r * n + c] = scale * (n as f64 * dh - sum_dh - hrow[c] * sum_dh_h);
                    }
                }
                self.accumulate(grads, *x, self.shaped_like(*x, dx));
                self.accumulate(grads, *gamma, self.shaped_like(*gamma, dgamma));
                self.accumulate(grads, *beta, self.shaped_like(*beta, dbeta));
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let n = t.cols();
                let mut d = vec![0.0f64; t.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..n {
                        d[id * n + c] += dy[r * n + c];
                    }
                }
                self.accumulate(grads, *table, self.shaped_like(*table, d));
            }
            Op::Dropout { x, mask } => {
                let d = dy.iter().zip(mask).map(|(g, m)| g * m).collect();
                self.accumulate(grads, *x, self.shaped_like(*x, d));
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.dims(*x);
                let w = grad.cols();
                let mut d = vec![0.0f64; m * n];
                for r in 0..m {
                    d[r * n + start..r * n + start + w].copy_from_slice(&dy[r * w..(r + 1) * w]);
                }
                self.accumulate(grads, *x, self.shaped_like(*x, d));
            }
            Op::ConcatCols(parts) => {
                let n = grad.cols();
                let mut offset = 0;
                for p in parts {
                    let (m, w) = self.dims(*p);
                    if self.nodes[p.0].needs_grad {
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&dy[r * n + offset..r * n + offset + w]);
                        }
                        self.accumulate(grads, *p, self.shaped_like(*p, d));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.nodes[p.0].needs_grad {
                        let d = dy[offset..offset + len].to_vec();
                        self.accumulate(grads, *p, self.shaped_like(*p, d));
                    }
                    offset += len;
                }
            }
            Op::MeanRows(x) => {
                let (m, n) = self.dims(*x);
                let mut d = Vec::with_capacity(m * n);
                for _ in 0..m {
                    d.extend(dy.iter().map(|g| g / m as f64));
                }
                self.accumulate(grads, *x, self.shaped_like(*x, d));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let n = self.dims(*logits).1;
                let upstream = dy[0] / *count as f64;
                let mut d = vec![0.0f64; probs.len()];
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = t else { continue };
                    for c in 0..n {
                        d[r * n + c] = probs[r * n + c] * upstream;
                    }
                    d[r * n + t] -= upstream;
                }
                self.accumulate(grads, *logits, self.shaped_like(*logits, d));
            }
        }
    }

    /// Gradient for every parameter touched by this graph, ordered by id.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = self
            .param_nodes
            .iter()
            .filter_map(|(pid, node)| grads.wrt(*node).map(|g| (*pid, g.clone())))
            .collect();
        out.sort_by_key(|(pid, _)| *pid);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_mask_layout() {
        let m = AttnMask::causal(3);
        assert_eq!(
            m.blocked,
            vec![false, true, true, false, false, true, false, false, false]
        );
    }

    #[test]
    fn fully_masked_row_is_zero() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let mask = AttnMask {
            rows: 2,
            cols: 2,
            blocked: vec![true, true, false, true],
        };
        let y = g.softmax(x, Some(&mask));
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert_eq!(g.dropout(x), x);
    }

    #[test]
    fn dropout_scales_survivors() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store).with_dropout(0.5, 3);
        let x = g.input(Tensor::full(&[1, 1000], 1.0));
        let y = g.dropout(x);
        let v = g.value(y).data();
        assert!(v.iter().all(|&a| a == 0.0 || a == 2.0));
        let kept = v.iter().filter(|&&a| a > 0.0).count();
        assert!((400..600).contains(&kept), "kept {kept}");
    }

    #[test]
    fn param_gets_single_node() {
        let mut store = ParamStore::new();
        let p = store.add("w", Tensor::full(&[1, 2], 1.0));
        let mut g = Graph::new(&store);
        let a = g.param(p);
        let b = g.param(p);
        assert_eq!(a, b);
        let s = g.add(a, b);
        let grads = g.backward(s);
        let pg = g.param_grads(&grads);
        assert_eq!(pg.len(), 1);
        assert_eq!(pg[0].1.data(), &[2.0, 2.0]);
    }
}
