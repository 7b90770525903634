//! Tape-recorded compute graph with reverse-mode differentiation.
//!
//! A `Tape` records one forward pass as a flat list of nodes; node order is
//! the topological order, so `backward` is a single reverse sweep that visits
//! each node exactly once. Gradients accumulate (`+=`) into inputs, so a
//! value consumed by several operations receives the sum of branch
//! gradients. After `backward` the graph is consumed: record further ops only
//! after `reset`.

use crate::tensor::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    /// Equal-shape or scalar-vs-tensor addition.
    Add(NodeId, NodeId),
    /// Equal-shape or scalar-vs-tensor elementwise product.
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Log(NodeId),
    Exp(NodeId),
    /// Multiply by a compile-time constant; no gradient flows into the constant.
    Scale(NodeId, f64),
    SoftmaxRows(NodeId),
    /// Column-wise concat; the usize is the split column (cols of lhs).
    ConcatCols(NodeId, NodeId, usize),
    ReduceSum(NodeId, usize),
    ReduceMean(NodeId, usize),
    /// out[r] = x[r, idx[r]]; used to pick the taken action per sample.
    SelectPerRow(NodeId, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Dynamic compute graph, rebuilt per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all nodes and allow recording again.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    /// Record a leaf, keeping the tensor's `requires_grad` flag.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    /// Record a differentiable leaf copied from a parameter tensor.
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        self.push(t.clone().with_grad(), Op::Leaf)
    }

    /// Record a non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let mut t = t;
        t.requires_grad = false;
        self.push(t, Op::Leaf)
    }

    pub fn const_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass w.r.t. the node, if one flowed there.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        assert!(!self.consumed, "tape already consumed by backward; call reset()");
        debug_assert!(
            value.all_finite(),
            "non-finite value after forward op {:?}",
            op
        );
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].value.requires_grad
    }

    // ---- forward operations -------------------------------------------------

    /// Matrix product `[m×k]·[k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let mut t = Tensor::new(vec![m, n], out);
        t.requires_grad = self.requires(a) || self.requires(b);
        Ok(self.push(t, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(TensorError::Shape {
                op: "transpose",
                lhs: tx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = tx.data()[i * n + j];
            }
        }
        let mut t = Tensor::new(vec![n, m], out);
        t.requires_grad = self.requires(x);
        Ok(self.push(t, Op::Transpose(x)))
    }

    /// Elementwise sum; operands must have equal shapes or one may be scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = broadcast_zip(ta, tb, "add", |x, y| x + y)?;
        let shape = broadcast_shape(ta, tb);
        let mut t = Tensor::new(shape, data);
        t.requires_grad = self.requires(a) || self.requires(b);
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Elementwise product; operands must have equal shapes or one may be scalar.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = broadcast_zip(ta, tb, "mul", |x, y| x * y)?;
        let shape = broadcast_shape(ta, tb);
        let mut t = Tensor::new(shape, data);
        t.requires_grad = self.requires(a) || self.requires(b);
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// `a - b`, composed from the primitive ops.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let t = self.map_unary(x, |v| v.max(0.0));
        self.push(t, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let t = self.map_unary(x, f64::tanh);
        self.push(t, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let t = self.map_unary(x, f64::exp);
        self.push(t, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        if let Some(&bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::LogDomain { value: bad });
        }
        let t = self.map_unary(x, f64::ln);
        Ok(self.push(t, Op::Log(x)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let t = self.map_unary(x, |v| v * c);
        self.push(t, Op::Scale(x, c))
    }

    /// Row-wise softmax, stabilized by per-row max subtraction.
    /// Rank-1 input is treated as a single row.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let tx = self.value(x);
        if tx.rank() == 0 || tx.rank() > 2 {
            return Err(TensorError::Shape {
                op: "softmax_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &tx.data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in &mut out[r * cols..(r + 1) * cols] {
                *o /= sum;
            }
        }
        let mut t = Tensor::new(tx.shape().to_vec(), out);
        t.requires_grad = self.requires(x);
        Ok(self.push(t, Op::SoftmaxRows(x)))
    }

    /// Column-wise concatenation of `[m×p]` and `[m×q]` into `[m×(p+q)]`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[0] != tb.shape()[0] {
            return Err(TensorError::Shape {
                op: "concat_cols",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, p, q) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            out.extend_from_slice(&ta.data()[r * p..(r + 1) * p]);
            out.extend_from_slice(&tb.data()[r * q..(r + 1) * q]);
        }
        let mut t = Tensor::new(vec![m, p + q], out);
        t.requires_grad = self.requires(a) || self.requires(b);
        Ok(self.push(t, Op::ConcatCols(a, b, p)))
    }

    pub fn reduce_sum(&mut self, x: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        self.reduce(x, axis, false)
    }

    pub fn reduce_mean(&mut self, x: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        self.reduce(x, axis, true)
    }

    fn reduce(&mut self, x: NodeId, axis: usize, mean: bool) -> Result<NodeId, TensorError> {
        let tx = self.value(x);
        let rank = tx.rank();
        if axis >= rank {
            return Err(TensorError::Axis {
                op: if mean { "reduce_mean" } else { "reduce_sum" },
                axis,
                rank,
            });
        }
        let shape = tx.shape();
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                for i in 0..inner {
                    out[o * inner + i] += tx.data()[base + i];
                }
            }
        }
        if mean {
            for v in &mut out {
                *v /= mid as f64;
            }
        }
        let mut new_shape = shape.to_vec();
        new_shape.remove(axis);
        let mut t = Tensor::new(new_shape, out);
        t.requires_grad = self.requires(x);
        let op = if mean {
            Op::ReduceMean(x, axis)
        } else {
            Op::ReduceSum(x, axis)
        };
        Ok(self.push(t, op))
    }

    /// Pick one column per row: `out[r] = x[r, idx[r]]`, shape `[m]`.
    pub fn select_per_row(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId, TensorError> {
        let tx = self.value(x);
        if tx.rank() != 2 || idx.len() != tx.shape()[0] {
            return Err(TensorError::Shape {
                op: "select_per_row",
                lhs: tx.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let cols = tx.shape()[1];
        let mut out = Vec::with_capacity(idx.len());
        for (r, &c) in idx.iter().enumerate() {
            if c >= cols {
                return Err(TensorError::RowIndex { row: c, rows: cols });
            }
            out.push(tx.at(r, c));
        }
        let mut t = Tensor::vector(out);
        t.requires_grad = self.requires(x);
        Ok(self.push(t, Op::SelectPerRow(x, idx.to_vec())))
    }

    // ---- composed conveniences ----------------------------------------------

    /// Elementwise minimum, composed as `a - relu(a - b)`.
    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let d = self.sub(a, b)?;
        let r = self.relu(d);
        self.sub(a, r)
    }

    /// Clamp into `[lo, hi]`, composed as `lo + relu(x-lo) - relu(x-hi)`.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId, TensorError> {
        let lo_n = self.const_scalar(lo);
        let xl = self.sub(x, lo_n)?;
        let rl = self.relu(xl);
        let hi_n = self.const_scalar(hi);
        let xh = self.sub(x, hi_n)?;
        let rh = self.relu(xh);
        let base = self.add(lo_n, rl)?;
        self.sub(base, rh)
    }

    /// Reduce every axis until a rank-0 scalar remains (summing).
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let mut cur = x;
        while self.value(cur).rank() > 0 {
            cur = self.reduce_sum(cur, 0)?;
        }
        Ok(cur)
    }

    /// Mean over all elements, as a rank-0 scalar.
    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let n = self.value(x).len() as f64;
        let s = self.sum_all(x)?;
        Ok(self.scale(s, 1.0 / n))
    }

    fn map_unary(&self, x: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let mut t = Tensor::new(tx.shape().to_vec(), data);
        t.requires_grad = tx.requires_grad;
        t
    }

    // ---- backward -------------------------------------------------------------

    /// Reverse sweep from a one-element loss; populates `grad` on every node
    /// that influenced it and requires a gradient. The graph is consumed.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let lt = &self.nodes[loss.0].value;
        if !lt.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        self.consumed = true;
        self.nodes[loss.0].value.grad = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let Some(dy) = self.nodes[i].value.grad.clone() else {
                continue;
            };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (m, k) = {
                        let s = self.nodes[a.0].value.shape();
                        (s[0], s[1])
                    };
                    let n = self.nodes[b.0].value.shape()[1];
                    if self.requires(a) {
                        // dA = dC · Bᵀ
                        let bt = transpose_data(self.nodes[b.0].value.data(), k, n);
                        let mut da = vec![0.0; m * k];
                        matmul_into(&dy, &bt, &mut da, m, n, k);
                        self.accumulate(a, &da);
                    }
                    if self.requires(b) {
                        // dB = Aᵀ · dC
                        let at = transpose_data(self.nodes[a.0].value.data(), m, k);
                        let mut db = vec![0.0; k * n];
                        matmul_into(&at, &dy, &mut db, k, m, n);
                        self.accumulate(b, &db);
                    }
                }
                Op::Transpose(x) => {
                    if self.requires(x) {
                        let (n, m) = {
                            let s = self.nodes[i].value.shape();
                            (s[0], s[1])
                        };
                        let dx = transpose_data(&dy, n, m);
                        self.accumulate(x, &dx);
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate_broadcast(a, &dy, None);
                    self.accumulate_broadcast(b, &dy, None);
                }
                Op::Mul(a, b) => {
                    if self.requires(a) {
                        let other = self.nodes[b.0].value.clone();
                        self.accumulate_broadcast(a, &dy, Some(&other));
                    }
                    if self.requires(b) {
                        let other = self.nodes[a.0].value.clone();
                        self.accumulate_broadcast(b, &dy, Some(&other));
                    }
                }
                Op::Relu(x) => {
                    if self.requires(x) {
                        let dx: Vec<f64> = self.nodes[x.0]
                            .value
                            .data()
                            .iter()
                            .zip(&dy)
                            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                            .collect();
                        self.accumulate(x, &dx);
                    }
                }
                Op::Tanh(x) => {
                    if self.requires(x) {
                        let dx: Vec<f64> = self.nodes[i]
                            .value
                            .data()
                            .iter()
                            .zip(&dy)
                            .map(|(&y, &g)| g * (1.0 - y * y))
                            .collect();
                        self.accumulate(x, &dx);
                    }
                }
                Op::Log(x) => {
                    if self.requires(x) {
                        let dx: Vec<f64> = self.nodes[x.0]
                            .value
                            .data()
                            .iter()
                            .zip(&dy)
                            .map(|(&v, &g)| g / v)
                            .collect();
                        self.accumulate(x, &dx);
                    }
                }
                Op::Exp(x) => {
                    if self.requires(x) {
                        let dx: Vec<f64> = self.nodes[i]
                            .value
                            .data()
                            .iter()
                            .zip(&dy)
                            .map(|(&y, &g)| g * y)
                            .collect();
                        self.accumulate(x, &dx);
                    }
                }
                Op::Scale(x, c) => {
                    if self.requires(x) {
                        let dx: Vec<f64> = dy.iter().map(|&g| g * c).collect();
                        self.accumulate(x, &dx);
                    }
                }
                Op::SoftmaxRows(x) => {
                    if self.requires(x) {
                        let y = &self.nodes[i].value;
                        let (rows, cols) = (y.rows(), y.cols());
                        let mut dx = vec![0.0; rows * cols];
                        for r in 0..rows {
                            let yr = &y.data()[r * cols..(r + 1) * cols];
                            let gr = &dy[r * cols..(r + 1) * cols];
                            let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for c in 0..cols {
                                dx[r * cols + c] = yr[c] * (gr[c] - dot);
                            }
                        }
                        self.accumulate(x, &dx);
                    }
                }
                Op::ConcatCols(a, b, p) => {
                    let m = self.nodes[i].value.shape()[0];
                    let total = self.nodes[i].value.shape()[1];
                    let q = total - p;
                    if self.requires(a) {
                        let mut da = vec![0.0; m * p];
                        for r in 0..m {
                            da[r * p..(r + 1) * p]
                                .copy_from_slice(&dy[r * total..r * total + p]);
                        }
                        self.accumulate(a, &da);
                    }
                    if self.requires(b) {
                        let mut db = vec![0.0; m * q];
                        for r in 0..m {
                            db[r * q..(r + 1) * q]
                                .copy_from_slice(&dy[r * total + p..(r + 1) * total]);
                        }
                        self.accumulate(b, &db);
                    }
                }
                Op::ReduceSum(x, axis) | Op::ReduceMean(x, axis) => {
                    if self.requires(x) {
                        let shape = self.nodes[x.0].value.shape().to_vec();
                        let outer: usize = shape[..axis].iter().product();
                        let mid = shape[axis];
                        let inner: usize = shape[axis + 1..].iter().product();
                        let w = if matches!(self.nodes[i].op, Op::ReduceMean(_, _)) {
                            1.0 / mid as f64
                        } else {
                            1.0
                        };
                        let mut dx = vec![0.0; outer * mid * inner];
                        for o in 0..outer {
                            for m in 0..mid {
                                let base = (o * mid + m) * inner;
                                for inr in 0..inner {
                                    dx[base + inr] = dy[o * inner + inr] * w;
                                }
                            }
                        }
                        self.accumulate(x, &dx);
                    }
                }
                Op::SelectPerRow(x, ref idx) => {
                    if self.requires(x) {
                        let cols = self.nodes[x.0].value.shape()[1];
                        let mut dx = vec![0.0; self.nodes[x.0].value.len()];
                        for (r, &c) in idx.iter().enumerate() {
                            dx[r * cols + c] += dy[r];
                        }
                        self.accumulate(x, &dx);
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, contribution: &[f64]) {
        let t = &mut self.nodes[id.0].value;
        if !t.requires_grad {
            return;
        }
        let grad = t.grad.get_or_insert_with(|| vec![0.0; contribution.len()]);
        for (g, &c) in grad.iter_mut().zip(contribution) {
            *g += c;
        }
    }

    /// Accumulate `dy ⊙ other` (or `dy` when `other` is None) into `id`,
    /// summing down to a scalar when `id` was broadcast.
    fn accumulate_broadcast(&mut self, id: NodeId, dy: &[f64], other: Option<&Tensor>) {
        if !self.requires(id) {
            return;
        }
        let target_len = self.nodes[id.0].value.len();
        let term = |i: usize| -> f64 {
            match other {
                None => dy[i],
                Some(o) if o.is_scalar() => dy[i] * o.data()[0],
                Some(o) => dy[i] * o.data()[i],
            }
        };
        if target_len == dy.len() {
            let dx: Vec<f64> = (0..dy.len()).map(term).collect();
            self.accumulate(id, &dx);
        } else {
            debug_assert_eq!(target_len, 1);
            let total: f64 = (0..dy.len()).map(term).sum();
            self.accumulate(id, &[total]);
        }
    }
}

fn broadcast_shape(a: &Tensor, b: &Tensor) -> Vec<usize> {
    if a.is_scalar() && !b.is_scalar() {
        b.shape().to_vec()
    } else {
        a.shape().to_vec()
    }
}

fn broadcast_zip(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>, TensorError> {
    if a.shape() == b.shape() {
        Ok(a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
    } else if b.is_scalar() {
        let s = b.data()[0];
        Ok(a.data().iter().map(|&x| f(x, s)).collect())
    } else if a.is_scalar() {
        let s = a.data()[0];
        Ok(b.data().iter().map(|&y| f(s, y)).collect())
    } else {
        Err(TensorError::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn transpose_data(x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x[i * n + j];
        }
    }
    out
}

/// `c += a·b` with `a: [m×k]`, `b: [k×n]`, cache-friendly ikj order.
fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}
