//! Minimal reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Tape`] is an append-only arena of nodes. Every operation evaluates its forward
//! value eagerly, stores it on the tape and returns a lightweight [`Tensor`] handle.
//! [`Tape::backward`] walks the arena in reverse and accumulates gradients into every
//! node that requires them. Tapes are single-threaded; parallel callers give each ray
//! batch its own tape and sum the resulting parameter gradients.

pub mod kernels;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a [`Tape`].
///
/// A handle is only meaningful for the tape (and tape generation) that created it;
/// using it after [`Tape::clear`] or on another tape panics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    tape: u64,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reduction axis. `Rows` collapses the row dimension (result is 1×cols), `Cols`
/// collapses the column dimension (result is rows×1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Exp,
    Sin,
    Cos,
    Relu,
    Sigmoid,
    Softplus,
    Neg,
    Abs,
    ReciprocalSqrt,
}

impl UnaryKind {
    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryKind::Exp => x.exp(),
            UnaryKind::Sin => x.sin(),
            UnaryKind::Cos => x.cos(),
            UnaryKind::Relu => kernels::relu(x),
            UnaryKind::Sigmoid => kernels::sigmoid(x),
            UnaryKind::Softplus => kernels::softplus(x),
            UnaryKind::Neg => -x,
            UnaryKind::Abs => x.abs(),
            UnaryKind::ReciprocalSqrt => 1.0 / x.sqrt(),
        }
    }

    /// d(output)/d(input) given the input `x` and the stored output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryKind::Exp => y,
            UnaryKind::Sin => x.cos(),
            UnaryKind::Cos => -x.sin(),
            UnaryKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryKind::Sigmoid => y * (1.0 - y),
            UnaryKind::Softplus => kernels::sigmoid(x),
            UnaryKind::Neg => -1.0,
            UnaryKind::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            UnaryKind::ReciprocalSqrt => -0.5 * y * y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Binary(BinaryKind, usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    Unary(UnaryKind, usize),
    Sum(usize, Axis),
    Mean(usize, Axis),
    Concat(usize, usize),
    SliceCols(usize, usize),
    Reshape(usize),
    Detach(usize),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Append-only record of a differentiable computation.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Drops every node. Handles issued before the call become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, t: Tensor) -> &Node {
        assert_eq!(t.tape, self.id, "tensor used with a tape that did not create it");
        &self.nodes[t.id]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(value.len(), rows * cols);
        let id = self.nodes.len();
        self.nodes.push(Node { op, rows, cols, value, requires_grad });
        self.grads.push(None);
        Tensor { id, tape: self.id, rows, cols }
    }

    fn record(&mut self, op: Op, rows: usize, cols: usize) -> Tensor {
        let requires_grad = self.inputs(&op).iter().any(|&i| self.nodes[i].requires_grad);
        let value = self.evaluate(&op, rows, cols);
        self.push(op, rows, cols, value, requires_grad)
    }

    /// Trainable input; gradients are accumulated for it.
    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Tensor {
        assert_eq!(values.len(), rows * cols, "leaf values do not match shape");
        self.push(Op::Leaf, rows, cols, values, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Tensor {
        assert_eq!(values.len(), rows * cols, "constant values do not match shape");
        self.push(Op::Constant, rows, cols, values, false)
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.node(t).value
    }

    /// Scalar value of a 1×1 tensor.
    pub fn scalar(&self, t: Tensor) -> f64 {
        assert_eq!(t.len(), 1, "scalar() on a non-scalar tensor");
        self.node(t).value[0]
    }

    /// Accumulated gradient, `None` if nothing has flowed into this node.
    pub fn grad(&self, t: Tensor) -> Option<&[f64]> {
        assert_eq!(t.tape, self.id, "tensor used with a tape that did not create it");
        self.grads[t.id].as_deref()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.node(t).requires_grad
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(Error::Shape { op: "matmul", lhs: a.shape(), rhs: b.shape() });
        }
        self.node(a);
        self.node(b);
        Ok(self.record(Op::MatMul(a.id, b.id), a.rows, b.cols))
    }

    fn binary(&mut self, kind: BinaryKind, a: Tensor, b: Tensor, name: &'static str) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Error::Shape { op: name, lhs: a.shape(), rhs: b.shape() });
        }
        self.node(a);
        self.node(b);
        Ok(self.record(Op::Binary(kind, a.id, b.id), a.rows, a.cols))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Add, a, b, "add")
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Sub, a, b, "sub")
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Mul, a, b, "mul")
    }

    /// `x (m×n) + bias (1×n)`, bias repeated over rows.
    pub fn add_bias(&mut self, x: Tensor, bias: Tensor) -> Result<Tensor> {
        if bias.rows != 1 || bias.cols != x.cols {
            return Err(Error::Shape { op: "add_bias", lhs: x.shape(), rhs: bias.shape() });
        }
        self.node(x);
        self.node(bias);
        Ok(self.record(Op::AddBias(x.id, bias.id), x.rows, x.cols))
    }

    pub fn scale(&mut self, a: Tensor, factor: f64) -> Tensor {
        self.node(a);
        self.record(Op::Scale(a.id, factor), a.rows, a.cols)
    }

    pub fn add_scalar(&mut self, a: Tensor, offset: f64) -> Tensor {
        self.node(a);
        self.record(Op::AddScalar(a.id, offset), a.rows, a.cols)
    }

    pub fn unary(&mut self, kind: UnaryKind, a: Tensor) -> Result<Tensor> {
        let values = &self.node(a).value;
        if kind == UnaryKind::ReciprocalSqrt {
            if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::Domain {
                    op: "reciprocal_sqrt",
                    detail: format!("non-positive input {bad}"),
                });
            }
        }
        Ok(self.record(Op::Unary(kind, a.id), a.rows, a.cols))
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Exp, a)
    }

    pub fn sin(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Sin, a)
    }

    pub fn cos(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Cos, a)
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Sigmoid, a)
    }

    pub fn softplus(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Softplus, a)
    }

    pub fn neg(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Neg, a)
    }

    pub fn abs(&mut self, a: Tensor) -> Tensor {
        self.unary_infallible(UnaryKind::Abs, a)
    }

    pub fn rsqrt(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(UnaryKind::ReciprocalSqrt, a)
    }

    fn unary_infallible(&mut self, kind: UnaryKind, a: Tensor) -> Tensor {
        self.node(a);
        self.record(Op::Unary(kind, a.id), a.rows, a.cols)
    }

    pub fn sum(&mut self, a: Tensor, axis: Axis) -> Tensor {
        self.node(a);
        let (rows, cols) = reduced_shape(a.rows, a.cols, axis);
        self.record(Op::Sum(a.id, axis), rows, cols)
    }

    pub fn mean(&mut self, a: Tensor, axis: Axis) -> Tensor {
        self.node(a);
        let (rows, cols) = reduced_shape(a.rows, a.cols, axis);
        self.record(Op::Mean(a.id, axis), rows, cols)
    }

    /// `[a | b]` for equal row counts.
    pub fn concat(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows {
            return Err(Error::Shape { op: "concat", lhs: a.shape(), rhs: b.shape() });
        }
        self.node(a);
        self.node(b);
        Ok(self.record(Op::Concat(a.id, b.id), a.rows, a.cols + b.cols))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Tensor, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > a.cols {
            return Err(Error::Shape { op: "slice_cols", lhs: a.shape(), rhs: (start, end) });
        }
        self.node(a);
        Ok(self.record(Op::SliceCols(a.id, start), a.rows, end - start))
    }

    /// Reinterprets the row-major buffer under a new shape of equal size.
    pub fn reshape(&mut self, a: Tensor, rows: usize, cols: usize) -> Result<Tensor> {
        if rows * cols != a.len() {
            return Err(Error::Shape { op: "reshape", lhs: a.shape(), rhs: (rows, cols) });
        }
        self.node(a);
        Ok(self.record(Op::Reshape(a.id), rows, cols))
    }

    /// Same values, no gradient flow past this node.
    pub fn detach(&mut self, a: Tensor) -> Tensor {
        let value = self.node(a).value.clone();
        self.push(Op::Detach(a.id), a.rows, a.cols, value, false)
    }

    fn inputs(&self, op: &Op) -> Vec<usize> {
        match *op {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::AddBias(a, b) | Op::Concat(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Unary(_, a)
            | Op::Sum(a, _)
            | Op::Mean(a, _)
            | Op::SliceCols(a, _)
            | Op::Reshape(a) => vec![a],
            // a detached node never propagates, so it has no differentiable inputs
            Op::Detach(_) => vec![],
        }
    }

    /// Forward value of `op` computed from the stored values of its inputs.
    fn evaluate(&self, op: &Op, rows: usize, cols: usize) -> Vec<f64> {
        let v = |i: usize| -> &[f64] { &self.nodes[i].value };
        match *op {
            Op::Leaf | Op::Constant => unreachable!("leaves carry their own values"),
            Op::Detach(a) => v(a).to_vec(),
            Op::MatMul(a, b) => {
                let k = self.nodes[a].cols;
                kernels::matmul(v(a), v(b), rows, k, cols)
            }
            Op::Binary(kind, a, b) => {
                let (x, y) = (v(a), v(b));
                match kind {
                    BinaryKind::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
                    BinaryKind::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
                    BinaryKind::Mul => x.iter().zip(y).map(|(p, q)| p * q).collect(),
                }
            }
            Op::AddBias(x, b) => kernels::add_bias(v(x), v(b), cols),
            Op::Scale(a, c) => v(a).iter().map(|x| x * c).collect(),
            Op::AddScalar(a, c) => v(a).iter().map(|x| x + c).collect(),
            Op::Unary(kind, a) => v(a).iter().map(|&x| kind.apply(x)).collect(),
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let (ir, ic) = (self.nodes[a].rows, self.nodes[a].cols);
                let mut out = reduce_sum(v(a), ir, ic, axis);
                if let Op::Mean(..) = op {
                    let count = reduced_count(ir, ic, axis) as f64;
                    out.iter_mut().for_each(|x| *x /= count);
                }
                out
            }
            Op::Concat(a, b) => kernels::concat_cols(v(a), self.nodes[a].cols, v(b), self.nodes[b].cols),
            Op::SliceCols(a, start) => {
                let ic = self.nodes[a].cols;
                v(a).chunks_exact(ic).flat_map(|row| row[start..start + cols].iter().copied()).collect()
            }
            Op::Reshape(a) => v(a).to_vec(),
        }
    }

    /// Recomputes every non-input node from its recorded inputs and reports whether the
    /// result equals the stored value bit for bit.
    pub fn verify_replay(&self) -> bool {
        self.nodes.iter().all(|node| match node.op {
            Op::Leaf | Op::Constant => true,
            ref op => {
                let again = self.evaluate(op, node.rows, node.cols);
                again.len() == node.value.len()
                    && again.iter().zip(&node.value).all(|(a, b)| a.to_bits() == b.to_bits())
            }
        })
    }

    fn accumulate(&mut self, id: usize, contribution: Vec<f64>) {
        match &mut self.grads[id] {
            Some(g) => g.iter_mut().zip(contribution).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn grad_slot(&mut self, id: usize) -> &mut Vec<f64> {
        let len = self.nodes[id].value.len();
        self.grads[id].get_or_insert_with(|| vec![0.0; len])
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across calls until
    /// [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.len() != 1 {
            return Err(Error::NonScalarLoss { rows: loss.rows, cols: loss.cols });
        }
        self.node(loss);
        if !self.nodes[loss.id].requires_grad {
            return Ok(());
        }

        // Seed in a scratch buffer so earlier accumulated gradients are preserved.
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        pending[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = pending[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut pending);
            self.accumulate(id, g);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], pending: &mut [Option<Vec<f64>>]) {
        let op = self.nodes[id].op.clone();
        let needs = |nodes: &[Node], i: usize| nodes[i].requires_grad;
        let add_into = |pending: &mut [Option<Vec<f64>>], i: usize, len: usize, f: &dyn Fn(&mut [f64])| {
            let slot = pending[i].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };

        match op {
            Op::Leaf | Op::Constant | Op::Detach(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.nodes[a].rows, self.nodes[a].cols);
                let n = self.nodes[b].cols;
                if needs(&self.nodes, a) {
                    let bv = &self.nodes[b].value;
                    add_into(pending, a, m * k, &|out| kernels::matmul_nt_acc(g, bv, m, n, k, out));
                }
                if needs(&self.nodes, b) {
                    let av = &self.nodes[a].value;
                    add_into(pending, b, k * n, &|out| kernels::matmul_tn_acc(av, g, m, k, n, out));
                }
            }
            Op::Binary(kind, a, b) => {
                let len = g.len();
                if needs(&self.nodes, a) {
                    let bv = &self.nodes[b].value;
                    add_into(pending, a, len, &|out| match kind {
                        BinaryKind::Add | BinaryKind::Sub => out.iter_mut().zip(g).for_each(|(o, d)| *o += d),
                        BinaryKind::Mul => out.iter_mut().zip(g).zip(bv).for_each(|((o, d), y)| *o += d * y),
                    });
                }
                if needs(&self.nodes, b) {
                    let av = &self.nodes[a].value;
                    add_into(pending, b, len, &|out| match kind {
                        BinaryKind::Add => out.iter_mut().zip(g).for_each(|(o, d)| *o += d),
                        BinaryKind::Sub => out.iter_mut().zip(g).for_each(|(o, d)| *o -= d),
                        BinaryKind::Mul => out.iter_mut().zip(g).zip(av).for_each(|((o, d), x)| *o += d * x),
                    });
                }
            }
            Op::AddBias(x, b) => {
                let cols = self.nodes[x].cols;
                if needs(&self.nodes, x) {
                    add_into(pending, x, g.len(), &|out| out.iter_mut().zip(g).for_each(|(o, d)| *o += d));
                }
                if needs(&self.nodes, b) {
                    add_into(pending, b, cols, &|out| {
                        for row in g.chunks_exact(cols) {
                            out.iter_mut().zip(row).for_each(|(o, d)| *o += d);
                        }
                    });
                }
            }
            Op::Scale(a, c) => {
                if needs(&self.nodes, a) {
                    add_into(pending, a, g.len(), &|out| out.iter_mut().zip(g).for_each(|(o, d)| *o += d * c));
                }
            }
            Op::AddScalar(a, _) | Op::Reshape(a) => {
                if needs(&self.nodes, a) {
                    add_into(pending, a, g.len(), &|out| out.iter_mut().zip(g).for_each(|(o, d)| *o += d));
                }
            }
            Op::Unary(kind, a) => {
                if needs(&self.nodes, a) {
                    let xs = &self.nodes[a].value;
                    let ys = &self.nodes[id].value;
                    add_into(pending, a, g.len(), &|out| {
                        for (((o, d), &x), &y) in out.iter_mut().zip(g).zip(xs).zip(ys) {
                            *o += d * kind.derivative(x, y);
                        }
                    });
                }
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                if needs(&self.nodes, a) {
                    let (rows, cols) = (self.nodes[a].rows, self.nodes[a].cols);
                    let scale = match op {
                        Op::Mean(..) => 1.0 / reduced_count(rows, cols, axis) as f64,
                        _ => 1.0,
                    };
                    add_into(pending, a, rows * cols, &|out| {
                        for r in 0..rows {
                            for c in 0..cols {
                                let upstream = match axis {
                                    Axis::Rows => g[c],
                                    Axis::Cols => g[r],
                                    Axis::All => g[0],
                                };
                                out[r * cols + c] += upstream * scale;
                            }
                        }
                    });
                }
            }
            Op::Concat(a, b) => {
                let (p, q) = (self.nodes[a].cols, self.nodes[b].cols);
                let rows = self.nodes[a].rows;
                if needs(&self.nodes, a) {
                    add_into(pending, a, rows * p, &|out| {
                        for r in 0..rows {
                            let src = &g[r * (p + q)..r * (p + q) + p];
                            out[r * p..(r + 1) * p].iter_mut().zip(src).for_each(|(o, d)| *o += d);
                        }
                    });
                }
                if needs(&self.nodes, b) {
                    add_into(pending, b, rows * q, &|out| {
                        for r in 0..rows {
                            let src = &g[r * (p + q) + p..(r + 1) * (p + q)];
                            out[r * q..(r + 1) * q].iter_mut().zip(src).for_each(|(o, d)| *o += d);
                        }
                    });
                }
            }
            Op::SliceCols(a, start) => {
                if needs(&self.nodes, a) {
                    let (rows, ic) = (self.nodes[a].rows, self.nodes[a].cols);
                    let width = self.nodes[id].cols;
                    add_into(pending, a, rows * ic, &|out| {
                        for r in 0..rows {
                            let dst = &mut out[r * ic + start..r * ic + start + width];
                            dst.iter_mut().zip(&g[r * width..(r + 1) * width]).for_each(|(o, d)| *o += d);
                        }
                    });
                }
            }
        }
    }

    /// Adds `src` into the gradient buffer of `t`, allocating it if needed.
    pub fn accumulate_grad(&mut self, t: Tensor, src: &[f64]) {
        self.node(t);
        let slot = self.grad_slot(t.id);
        slot.iter_mut().zip(src).for_each(|(a, b)| *a += b);
    }
}

fn reduced_shape(rows: usize, cols: usize, axis: Axis) -> (usize, usize) {
    match axis {
        Axis::Rows => (1, cols),
        Axis::Cols => (rows, 1),
        Axis::All => (1, 1),
    }
}

fn reduced_count(rows: usize, cols: usize, axis: Axis) -> usize {
    match axis {
        Axis::Rows => rows,
        Axis::Cols => cols,
        Axis::All => rows * cols,
    }
}

fn reduce_sum(values: &[f64], rows: usize, cols: usize, axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Rows => {
            let mut out = vec![0.0; cols];
            for row in values.chunks_exact(cols) {
                out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
            }
            out
        }
        Axis::Cols => values.chunks_exact(cols.max(1)).take(rows).map(|row| row.iter().sum()).collect(),
        Axis::All => vec![values.iter().sum()],
    }
}
