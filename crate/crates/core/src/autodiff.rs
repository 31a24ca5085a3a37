//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends one record holding its output value, the handles
//! of its inputs and whatever it needs for the backward rule. Records are
//! created in evaluation order, so the tape is already topologically sorted
//! and [`Tape::backward`] visits each record once, from the loss towards the
//! leaves.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Probability clamp applied inside the cross-entropy losses.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let lo = T::lit(PROB_CLAMP);
    p.max(lo).min(T::one() - lo)
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddConst(Var),
    MulConst(Var, Vec<T>),
    Activation(Var, Activation),
    Softmax(Var, usize),
    MaxPool(Var, Vec<usize>),
    Sum(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Column(Var, usize),
    MulColumn(Var, Var),
    Reshape(Var),
    BinaryCrossEntropy(Var, Vec<T>),
    CrossEntropy(Var, usize),
}

#[derive(Clone, Debug)]
struct Record<T> {
    op: Op<T>,
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Computation graph of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    records: Vec<Record<T>>,
}

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, delta: Vec<T>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a = *a + d),
        None => *slot = Some(delta),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            records: Vec::new(),
        }
    }

    /// Number of records on the tape.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.records.push(Record {
            op,
            shape,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.records.len() - 1)
    }

    fn rec(&self, v: Var) -> &Record<T> {
        &self.records[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.records[v.0].requires_grad
    }

    /// Records a tensor as a leaf. It receives gradients iff the tensor
    /// requires them.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(
            Op::Leaf,
            t.shape().to_vec(),
            t.values().to_vec(),
            t.requires_grad(),
        )
    }

    /// Records a non-differentiable leaf.
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.values().to_vec(), false)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.rec(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.rec(v).shape
    }

    /// Copies a recorded value out as a tensor.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let r = self.rec(v);
        Tensor::new(r.shape.clone(), r.value.clone()).expect("recorded shape is consistent")
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.rec(v).value[0]
    }

    /// Gradient accumulated at `v` by all `backward` calls so far.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.rec(v).grad.as_deref()
    }

    /// Adds the gradient accumulated at `v` into `target`'s gradient.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor<T>) -> Result<()> {
        match self.grad(v) {
            Some(g) => target.accumulate_grad(g),
            None => Ok(()),
        }
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension(format!(
                "{what} expects a matrix, got shape {s:?}"
            ))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul of {:?} by {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + x * bv[p * n + j];
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), vec![m, n], out, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), self.shape(a).to_vec(), out, rg))
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "add_row_bias")?;
        if numel(self.shape(bias)) != n {
            return Err(Error::Dimension(format!(
                "bias {:?} for rows of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let (xv, bv) = (self.value(x), self.value(bias));
        let out = (0..m * n).map(|idx| xv[idx] + bv[idx % n]).collect();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Op::AddRowBias(x, bias), vec![m, n], out, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), self.shape(a).to_vec(), out, rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        let rg = self.rg(x);
        self.push(Op::Scale(x, factor), self.shape(x).to_vec(), out, rg)
    }

    /// Adds a constant tensor; gradient flows to `x` only.
    pub fn add_const(&mut self, x: Var, c: &Tensor<T>) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(Error::Dimension(format!(
                "add_const of {:?} and {:?}",
                self.shape(x),
                c.shape()
            )));
        }
        let out = self
            .value(x)
            .iter()
            .zip(c.values())
            .map(|(&a, &b)| a + b)
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Op::AddConst(x), self.shape(x).to_vec(), out, rg))
    }

    /// Elementwise product with a constant mask (used for dropout).
    pub fn mul_const(&mut self, x: Var, mask: Vec<T>) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return Err(Error::Dimension(format!(
                "mask of length {} for {:?}",
                mask.len(),
                self.shape(x)
            )));
        }
        let out = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(&a, &m)| a * m)
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Op::MulConst(x, mask), self.shape(x).to_vec(), out, rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).iter().map(|&v| kind.apply(v)).collect();
        let rg = self.rg(x);
        self.push(Op::Activation(x, kind), self.shape(x).to_vec(), out, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "softmax axis {axis} for shape {shape:?}"
            )));
        }
        let (outer, len, inner) = axis_strides(&shape, axis);
        let xv = self.value(x);
        let mut out = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| xv[at(j)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for j in 0..len {
                    let e = (xv[at(j)] - max).exp();
                    out[at(j)] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Op::Softmax(x, axis), shape, out, rg))
    }

    /// Maximum over the token (row) axis of an `n × d` matrix.
    pub fn max_pool_rows(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "max_pool")?;
        if n == 0 {
            return Err(Error::EmptyInput("max-pool over zero tokens".into()));
        }
        let xv = self.value(x);
        let mut out = xv[..d].to_vec();
        let mut argmax = vec![0; d];
        for i in 1..n {
            for j in 0..d {
                // strict comparison keeps the first maximum
                if xv[i * d + j] > out[j] {
                    out[j] = xv[i * d + j];
                    argmax[j] = i;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Op::MaxPool(x, argmax), vec![d], out, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().copied().sum();
        let rg = self.rg(x);
        self.push(Op::Sum(x), Vec::new(), vec![total], rg)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::EmptyInput("concat of zero tensors".into()))?;
        let (m, _) = self.matrix_dims(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_cols")?;
            if r != m {
                return Err(Error::Dimension(format!(
                    "concat_cols of {:?} and {:?}",
                    self.shape(first),
                    self.shape(p)
                )));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), vec![m, total], out, rg))
    }

    /// Selects rows of a matrix (repetition allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, d) = self.matrix_dims(x, "gather_rows")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::Dimension(format!(
                "row {bad} out of range for {:?}",
                self.shape(x)
            )));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&xv[r * d..(r + 1) * d]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Op::GatherRows(x, rows.to_vec()),
            vec![rows.len(), d],
            out,
            rg,
        ))
    }

    /// Extracts column `col` of an `m × n` matrix as `m × 1`.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "column")?;
        if col >= n {
            return Err(Error::Dimension(format!(
                "column {col} of {:?}",
                self.shape(x)
            )));
        }
        let xv = self.value(x);
        let out = (0..m).map(|i| xv[i * n + col]).collect();
        let rg = self.rg(x);
        Ok(self.push(Op::Column(x, col), vec![m, 1], out, rg))
    }

    /// Scales row `i` of an `m × n` matrix by entry `i` of an `m × 1` column.
    pub fn mul_column(&mut self, x: Var, col: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "mul_column")?;
        if self.shape(col) != [m, 1] {
            return Err(Error::Dimension(format!(
                "mul_column of {:?} by {:?}",
                self.shape(x),
                self.shape(col)
            )));
        }
        let (xv, cv) = (self.value(x), self.value(col));
        let out = (0..m * n).map(|idx| xv[idx] * cv[idx / n]).collect();
        let rg = self.rg(x) || self.rg(col);
        Ok(self.push(Op::MulColumn(x, col), vec![m, n], out, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).len() {
            return Err(Error::Dimension(format!(
                "reshape {:?} to {shape:?}",
                self.shape(x)
            )));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Op::Reshape(x), shape.to_vec(), out, rg))
    }

    /// Summed binary cross-entropy of probabilities `pred` against 0/1
    /// `labels`. Probabilities are clamped to `[1e-7, 1 - 1e-7]`; the
    /// gradient is evaluated at the clamped probability.
    pub fn binary_cross_entropy(&mut self, pred: Var, labels: &[T]) -> Result<Var> {
        if labels.len() != self.value(pred).len() {
            return Err(Error::Dimension(format!(
                "{} labels for predictions of shape {:?}",
                labels.len(),
                self.shape(pred)
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::Label(format!("binary label {bad} not in {{0, 1}}")));
        }
        let loss = self
            .value(pred)
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let p = clamp_prob(p);
                -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
            })
            .sum();
        let rg = self.rg(pred);
        Ok(self.push(
            Op::BinaryCrossEntropy(pred, labels.to_vec()),
            Vec::new(),
            vec![loss],
            rg,
        ))
    }

    /// Categorical cross-entropy `-ln p[label]` of a probability vector,
    /// with the same clamp as the binary loss.
    pub fn cross_entropy(&mut self, probs: Var, label: usize) -> Result<Var> {
        let n = self.value(probs).len();
        if label >= n {
            return Err(Error::Label(format!(
                "class {label} out of range for {n} classes"
            )));
        }
        let loss = -clamp_prob(self.value(probs)[label]).ln();
        let rg = self.rg(probs);
        Ok(self.push(Op::CrossEntropy(probs, label), Vec::new(), vec![loss], rg))
    }

    /// Propagates d(loss)/d(record) to every record that requires a
    /// gradient. Gradients add onto those of earlier calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.rec(loss).value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.records[idx].requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(idx, &g, &mut adj);
            add_into(&mut self.records[idx].grad, g);
        }
        Ok(())
    }

    fn send(&self, adj: &mut [Option<Vec<T>>], to: Var, delta: Vec<T>) {
        if self.rg(to) {
            add_into(&mut adj[to.0], delta);
        }
    }

    fn propagate(&self, idx: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let rec = &self.records[idx];
        match &rec.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                let (av, bv) = (self.value(a), self.value(b));
                if self.rg(a) {
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            da[i * k + p] = (0..n).map(|j| g[i * n + j] * bv[p * n + j]).sum();
                        }
                    }
                    self.send(adj, a, da);
                }
                if self.rg(b) {
                    let mut db = vec![T::zero(); k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let x = av[i * k + p];
                            for j in 0..n {
                                db[p * n + j] = db[p * n + j] + x * g[i * n + j];
                            }
                        }
                    }
                    self.send(adj, b, db);
                }
            }
            &Op::Add(a, b) => {
                self.send(adj, a, g.to_vec());
                self.send(adj, b, g.to_vec());
            }
            &Op::AddRowBias(x, bias) => {
                self.send(adj, x, g.to_vec());
                let n = numel(self.shape(bias));
                let mut db = vec![T::zero(); n];
                for (idx, &gv) in g.iter().enumerate() {
                    db[idx % n] = db[idx % n] + gv;
                }
                self.send(adj, bias, db);
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                self.send(adj, a, g.iter().zip(bv).map(|(&g, &y)| g * y).collect());
                self.send(adj, b, g.iter().zip(av).map(|(&g, &x)| g * x).collect());
            }
            &Op::Scale(x, f) => self.send(adj, x, g.iter().map(|&v| v * f).collect()),
            &Op::AddConst(x) | &Op::Reshape(x) => self.send(adj, x, g.to_vec()),
            Op::MulConst(x, mask) => {
                self.send(adj, *x, g.iter().zip(mask).map(|(&g, &m)| g * m).collect())
            }
            &Op::Activation(x, kind) => {
                let y = &rec.value;
                let d: Vec<T> = match kind {
                    Activation::Tanh => g
                        .iter()
                        .zip(y)
                        .map(|(&g, &y)| g * (T::one() - y * y))
                        .collect(),
                    Activation::Relu => g
                        .iter()
                        .zip(self.value(x))
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect(),
                    Activation::Sigmoid => g
                        .iter()
                        .zip(y)
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect(),
                };
                self.send(adj, x, d);
            }
            &Op::Softmax(x, axis) => {
                let y = &rec.value;
                let (outer, len, inner) = axis_strides(&rec.shape, axis);
                let mut d = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let dot: T = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..len {
                            d[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                self.send(adj, x, d);
            }
            Op::MaxPool(x, argmax) => {
                let mut d = vec![T::zero(); self.value(*x).len()];
                let width = argmax.len();
                for (j, &i) in argmax.iter().enumerate() {
                    d[i * width + j] = g[j];
                }
                self.send(adj, *x, d);
            }
            &Op::Sum(x) => self.send(adj, x, vec![g[0]; self.value(x).len()]),
            Op::ConcatCols(parts) => {
                let (m, total) = (rec.shape[0], rec.shape[1]);
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for i in 0..m {
                            d.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        self.send(adj, p, d);
                    }
                    offset += w;
                }
            }
            Op::GatherRows(x, rows) => {
                let d_cols = rec.shape[1];
                let mut d = vec![T::zero(); self.value(*x).len()];
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..d_cols {
                        d[r * d_cols + j] = d[r * d_cols + j] + g[k * d_cols + j];
                    }
                }
                self.send(adj, *x, d);
            }
            &Op::Column(x, col) => {
                let n = self.shape(x)[1];
                let mut d = vec![T::zero(); self.value(x).len()];
                for (i, &gv) in g.iter().enumerate() {
                    d[i * n + col] = gv;
                }
                self.send(adj, x, d);
            }
            &Op::MulColumn(x, col) => {
                let n = rec.shape[1];
                let (xv, cv) = (self.value(x), self.value(col));
                if self.rg(x) {
                    self.send(
                        adj,
                        x,
                        (0..g.len()).map(|idx| g[idx] * cv[idx / n]).collect(),
                    );
                }
                if self.rg(col) {
                    let dc = (0..cv.len())
                        .map(|i| (0..n).map(|j| g[i * n + j] * xv[i * n + j]).sum())
                        .collect();
                    self.send(adj, col, dc);
                }
            }
            Op::BinaryCrossEntropy(pred, labels) => {
                let d = self
                    .value(*pred)
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| {
                        let p = clamp_prob(p);
                        g[0] * (-(y / p) + (T::one() - y) / (T::one() - p))
                    })
                    .collect();
                self.send(adj, *pred, d);
            }
            &Op::CrossEntropy(probs, label) => {
                let pv = self.value(probs);
                let mut d = vec![T::zero(); pv.len()];
                d[label] = -g[0] / clamp_prob(pv[label]);
                self.send(adj, probs, d);
            }
        }
    }
}

fn axis_strides(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
