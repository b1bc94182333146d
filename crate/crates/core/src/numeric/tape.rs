//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied during a forward pass in
//! execution order, so inputs always precede the nodes that consume them.
//! [`Tape::backward`] sweeps that list in reverse and returns a gradient
//! for every reachable node, plus per-parameter gradients keyed by the
//! parameter id supplied at registration.

use std::collections::BTreeMap;

use super::tensor::{matmul, softmax_into, Tensor};
use super::NumericError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

impl Value<'_> {
    fn tensor(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    Param(usize),
    Gather {
        param: usize,
        rows: Vec<usize>,
        table_shape: Vec<usize>,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    SoftmaxRows(Var),
    CrossEntropy {
        logits: Var,
        target: usize,
    },
    SumSquares(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::Gather { .. } => "gather",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::OneMinus(_) => "one_minus",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sum(_) => "sum",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::SumSquares(_) => "sum_squares",
        }
    }
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Parameters are borrowed, not copied; the tape must not outlive them.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.tensor()
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, NumericError> {
        if !value.is_finite() {
            return Err(NumericError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that takes no gradient (masks, one-hot encodings, frozen inputs).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A free leaf whose gradient is reported through [`Backward::grad`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a trainable parameter under `id`.
    pub fn param(&mut self, id: usize, t: &'p Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(t),
            op: Op::Param(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Gathers `rows` of an embedding table registered under `id`; the
    /// backward pass scatters into just those rows.
    pub fn gather(
        &mut self,
        id: usize,
        table: &Tensor,
        rows: &[usize],
    ) -> Result<Var, NumericError> {
        let n = table.rows();
        let cols = table.cols();
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= n {
                return Err(NumericError::IndexOutOfRange { index: r, len: n });
            }
            out.extend_from_slice(table.row_slice(r));
        }
        let value = Tensor::new(vec![rows.len(), cols], out)?;
        self.push(
            value,
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
                table_shape: table.shape().to_vec(),
            },
            true,
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = matmul(self.value(a), self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = self.value(a).transpose();
        let rg = self.requires(a);
        self.push(out, Op::Transpose(a), rg)
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.rows() != tb.rows() {
            return Err(NumericError::ShapeMismatch {
                op,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let values = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), values).expect("same length")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.check_same("add", a, b)?;
        let out = self.zip(a, b, |x, y| x + y);
        let rg = self.requires(a) || self.requires(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Adds a row vector `bias` (length = columns of `a`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumericError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.len() != ta.cols() {
            return Err(NumericError::ShapeMismatch {
                op: "add_row",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let cols = ta.cols();
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_slice_mut(r).iter_mut().zip(tb.values()) {
                *o += b;
            }
        }
        debug_assert_eq!(out.cols(), cols);
        let rg = self.requires(a) || self.requires(bias);
        self.push(out, Op::AddRow(a, bias), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.check_same("mul", a, b)?;
        let out = self.zip(a, b, |x, y| x * y);
        let rg = self.requires(a) || self.requires(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = self.value(a).map(|x| 1.0 - x);
        let rg = self.requires(a);
        self.push(out, Op::OneMinus(a), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NumericError> {
        let out = self.value(a).map(|x| x * s);
        let rg = self.requires(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = self.value(a).map(sigmoid);
        let rg = self.requires(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = self.value(a).map(f64::tanh);
        let rg = self.requires(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = self.value(a).map(f64::exp);
        let rg = self.requires(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = self.value(a).map(f64::ln);
        let rg = self.requires(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.requires(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var, NumericError> {
        let out = Tensor::scalar(self.value(a).sum_squares());
        let rg = self.requires(a);
        self.push(out, Op::SumSquares(a), rg)
    }

    /// Row-wise softmax. With a mask (same element count as `a`), only
    /// unmasked entries form each row's support; a row whose support is
    /// empty yields all zeros.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, NumericError> {
        let ta = self.value(a);
        if let Some(m) = mask {
            if m.len() != ta.len() {
                return Err(NumericError::ShapeMismatch {
                    op: "softmax_rows",
                    left: ta.shape().to_vec(),
                    right: vec![m.len()],
                });
            }
        }
        let cols = ta.cols();
        let mut out = Tensor::zeros(ta.shape());
        for r in 0..ta.rows() {
            let row_mask = mask.map(|m| &m[r * cols..(r + 1) * cols]);
            softmax_into(ta.row_slice(r), row_mask, out.row_slice_mut(r));
        }
        let rg = self.requires(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// `-log softmax(logits)[target]` for a single row of logits, evaluated
    /// through log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, NumericError> {
        let z = self.value(logits);
        if z.rows() != 1 || target >= z.cols() {
            return Err(NumericError::IndexOutOfRange {
                index: target,
                len: z.cols(),
            });
        }
        let loss = log_sum_exp(z.values()) - z.values()[target];
        let rg = self.requires(logits);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, target },
            rg,
        )
    }

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Backward, NumericError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NumericError::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0]).expect("scalar"));
        let mut params = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.tensor();
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.add_dense(*id, &g),
                Op::Gather {
                    param,
                    rows,
                    table_shape,
                } => {
                    params.add_rows(*param, table_shape, rows, &g);
                }
                Op::MatMul(a, b) => {
                    if self.requires(*a) {
                        let bt = self.value(*b).transpose();
                        let da = matmul(&g, &bt)?;
                        self.accumulate(&mut grads, *a, da);
                    }
                    if self.requires(*b) {
                        let at = self.value(*a).transpose();
                        let db = matmul(&at, &g)?;
                        self.accumulate(&mut grads, *b, db);
                    }
                }
                Op::Transpose(a) => {
                    let ga = g.transpose();
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Add(a, b) => {
                    if self.requires(*a) {
                        self.accumulate(&mut grads, *a, g.clone());
                    }
                    if self.requires(*b) {
                        self.accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.requires(*bias) {
                        let mut gb = Tensor::zeros(self.value(*bias).shape());
                        for r in 0..g.rows() {
                            for (o, v) in gb.values_mut().iter_mut().zip(g.row_slice(r)) {
                                *o += v;
                            }
                        }
                        self.accumulate(&mut grads, *bias, gb);
                    }
                    if self.requires(*a) {
                        self.accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires(*a) {
                        let ga = elementwise(&g, self.value(*b), |x, y| x * y);
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.requires(*b) {
                        let gb = elementwise(&g, self.value(*a), |x, y| x * y);
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::OneMinus(a) => self.accumulate(&mut grads, *a, g.map(|x| -x)),
                Op::Scale(a, s) => {
                    let s = *s;
                    self.accumulate(&mut grads, *a, g.map(|x| x * s));
                }
                Op::Sigmoid(a) => {
                    let ga = elementwise(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = elementwise(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = elementwise(&g, y, |gv, yv| gv * yv);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = elementwise(&g, self.value(*a), |gv, xv| gv / xv);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    let ga = Tensor::filled(self.value(*a).shape(), s);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SumSquares(a) => {
                    let s = g.item();
                    let ga = self.value(*a).map(|x| 2.0 * s * x);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let mut ga = Tensor::zeros(y.shape());
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, &p), &q) in ga.row_slice_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::CrossEntropy { logits, target } => {
                    let s = g.item();
                    let z = self.value(*logits);
                    let mut p = vec![0.0; z.len()];
                    softmax_into(z.values(), None, &mut p);
                    p[*target] -= 1.0;
                    p.iter_mut().for_each(|v| *v *= s);
                    let gz = Tensor::new(z.shape().to_vec(), p)?;
                    self.accumulate(&mut grads, *logits, gz);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Backward { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.requires(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                // Keep the node's own shape (e.g. a 1-D bias fed as a row).
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, g.into_values()).expect("gradient shape"));
            }
        }
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), values).expect("same length")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Result of [`Tape::backward`].
pub struct Backward {
    grads: Vec<Option<Tensor>>,
    params: Gradients,
}

impl Backward {
    /// Gradient of the loss with respect to node `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &Gradients {
        &self.params
    }

    pub fn into_params(self) -> Gradients {
        self.params
    }
}

/// Gradient of one parameter: dense, or a sparse set of rows for
/// gathered embedding tables.
#[derive(Clone, Debug)]
pub enum ParamGrad {
    Dense(Tensor),
    Rows {
        shape: Vec<usize>,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

/// Per-parameter gradients keyed by the id given at registration.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<usize, ParamGrad>,
}

impl Gradients {
    pub fn get(&self, id: usize) -> Option<&ParamGrad> {
        self.by_param.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_param.keys().copied()
    }

    fn add_dense(&mut self, id: usize, g: &Tensor) {
        match self.by_param.get_mut(&id) {
            Some(ParamGrad::Dense(t)) => t.add_assign(g),
            Some(ParamGrad::Rows { .. }) => {
                let rows = self.by_param.remove(&id).expect("present");
                let mut dense = rows.to_dense();
                dense.add_assign(g);
                self.by_param.insert(id, ParamGrad::Dense(dense));
            }
            None => {
                self.by_param.insert(id, ParamGrad::Dense(g.clone()));
            }
        }
    }

    fn add_rows(&mut self, id: usize, table_shape: &[usize], rows: &[usize], g: &Tensor) {
        let entry = self.by_param.entry(id).or_insert_with(|| ParamGrad::Rows {
            shape: table_shape.to_vec(),
            rows: BTreeMap::new(),
        });
        match entry {
            ParamGrad::Rows { rows: acc, .. } => {
                for (i, &r) in rows.iter().enumerate() {
                    let src = g.row_slice(i);
                    let dst = acc.entry(r).or_insert_with(|| vec![0.0; src.len()]);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            ParamGrad::Dense(t) => {
                for (i, &r) in rows.iter().enumerate() {
                    for (d, s) in t.row_slice_mut(r).iter_mut().zip(g.row_slice(i)) {
                        *d += s;
                    }
                }
            }
        }
    }

    /// Adds `scale · gradient` of every parameter into the dense buffers,
    /// indexed by parameter id.
    pub fn accumulate_into(&self, dense: &mut [Tensor], scale: f64) {
        for (&id, g) in &self.by_param {
            let dst = &mut dense[id];
            match g {
                ParamGrad::Dense(t) => {
                    for (d, s) in dst.values_mut().iter_mut().zip(t.values()) {
                        *d += scale * s;
                    }
                }
                ParamGrad::Rows { rows, .. } => {
                    for (&r, src) in rows {
                        for (d, s) in dst.row_slice_mut(r).iter_mut().zip(src) {
                            *d += scale * s;
                        }
                    }
                }
            }
        }
    }
}

impl ParamGrad {
    pub fn to_dense(&self) -> Tensor {
        match self {
            ParamGrad::Dense(t) => t.clone(),
            ParamGrad::Rows { shape, rows } => {
                let mut t = Tensor::zeros(shape);
                for (&r, src) in rows {
                    t.row_slice_mut(r).copy_from_slice(src);
                }
                t
            }
        }
    }
}
