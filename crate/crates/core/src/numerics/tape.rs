//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation appends a node to an append-only [`Tape`]; node ids are
//! assigned in creation order, which is therefore a valid topological order
//! for the reverse sweep in [`Tape::backward`].

use super::tensor::{Axis, Tensor};
use crate::error::{Error, Result};

/// Outputs of sigmoid are kept this far away from 0 and 1 so that any
/// downstream logarithm stays finite.
pub const PROB_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var, Axis),
    Sum(Var, Axis),
    Mean(Var, Axis),
    SumAll(Var),
    Concat(Var, Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    PairSum(Var, Var),
    Reshape(Var),
    Bce(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient for `v`; nodes not on any path to the loss get exact zeros.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (model parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str) -> Result<(Tensor, bool)> {
        let (va, vb) = (self.value(a), self.value(b));
        va.same_shape(name, vb)?;
        let value = match name {
            "add" => va.zip_map(vb, |x, y| x + y)?,
            "sub" => va.zip_map(vb, |x, y| x - y)?,
            _ => va.zip_map(vb, |x, y| x * y)?,
        };
        Ok((value, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, rg) = self.binary(a, b, "add")?;
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, rg) = self.binary(a, b, "sub")?;
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, rg) = self.binary(a, b, "mul")?;
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 - x);
        let rg = self.rg(a);
        self.push(value, Op::OneMinus(a), rg)
    }

    /// Adds the `1 × n` row `bias` to every row of the `m × n` matrix `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(Error::shape("add_bias", &vx.shape(), &vb.shape()));
        }
        let mut value = vx.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    /// Logistic sigmoid, clamped to `[PROB_EPS, 1 − PROB_EPS]`.
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let value = self.value(a).softmax(axis);
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a, axis), rg)
    }

    pub fn sum(&mut self, a: Var, axis: Axis) -> Var {
        let value = self.value(a).sum(axis);
        let rg = self.rg(a);
        self.push(value, Op::Sum(a, axis), rg)
    }

    pub fn mean(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let va = self.value(a);
        let n = match axis {
            Axis::Row => va.cols(),
            Axis::Column => va.rows(),
        };
        if n == 0 {
            return Err(Error::Domain("mean over an empty axis".into()));
        }
        let value = va.sum(axis).map(|x| x / n as f64);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Mean(a, axis), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum_all());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        if start > end || end > va.cols() {
            return Err(Error::shape("slice_cols", &va.shape(), &[start, end]));
        }
        let value = va.slice_cols(start, end);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Row lookup: output row `r` is row `index[r]` of `table`.
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let mut data = Vec::with_capacity(index.len() * vt.cols());
        for &i in index {
            if i >= vt.rows() {
                return Err(Error::Validation(format!(
                    "row index {i} out of range for table with {} rows",
                    vt.rows()
                )));
            }
            data.extend_from_slice(vt.row(i));
        }
        let value = Tensor::new(index.len(), vt.cols(), data)?;
        let rg = self.rg(table);
        Ok(self.push(value, Op::GatherRows(table, index.to_vec()), rg))
    }

    /// All pairwise row sums: for `a: m × d` and `b: n × d`, row `i·n + j` of
    /// the `(m·n) × d` output is `a_i + b_j`.
    pub fn pair_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::shape("pair_sum", &va.shape(), &vb.shape()));
        }
        let (m, n, d) = (va.rows(), vb.rows(), va.cols());
        let mut data = Vec::with_capacity(m * n * d);
        for i in 0..m {
            let ra = va.row(i);
            for j in 0..n {
                data.extend(ra.iter().zip(vb.row(j)).map(|(x, y)| x + y));
            }
        }
        let value = Tensor::new(m * n, d, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::PairSum(a, b), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let va = self.value(a);
        if rows * cols != va.len() {
            return Err(Error::shape("reshape", &va.shape(), &[rows, cols]));
        }
        let value = Tensor::new(rows, cols, va.data().to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Summed binary cross-entropy `−Σ [y log o + (1−y) log(1−o)]` as a
    /// `1 × 1` node. `o` is clamped to `[PROB_EPS, 1 − PROB_EPS]` first.
    pub fn bce(&mut self, o: Var, targets: &Tensor) -> Result<Var> {
        let vo = self.value(o);
        vo.same_shape("bce", targets)?;
        let loss: f64 = vo
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let rg = self.rg(o);
        Ok(self.push(Tensor::scalar(loss), Op::Bce(o, targets.clone()), rg))
    }

    /// Reverse sweep from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        if !self.rg(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let da = g.matmul_nt(self.value(*b))?;
                    self.accumulate(grads, *a, da)?;
                }
                if self.rg(*b) {
                    let db = self.value(*a).matmul_tn(g)?;
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose())?,
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.map(|x| -x))?;
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let da = g.zip_map(self.value(*b), |x, y| x * y)?;
                    self.accumulate(grads, *a, da)?;
                }
                if self.rg(*b) {
                    let db = g.zip_map(self.value(*a), |x, y| x * y)?;
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, g.map(|x| x * f))?,
            Op::OneMinus(a) => self.accumulate(grads, *a, g.map(|x| -x))?,
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone())?;
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.sum(Axis::Column))?;
                }
            }
            Op::Sigmoid(a) => {
                let da = g.zip_map(y, |g, s| g * s * (1.0 - s))?;
                self.accumulate(grads, *a, da)?;
            }
            Op::Tanh(a) => {
                let da = g.zip_map(y, |g, t| g * (1.0 - t * t))?;
                self.accumulate(grads, *a, da)?;
            }
            Op::Relu(a) => {
                let da = g.zip_map(y, |g, r| if r > 0.0 { g } else { 0.0 })?;
                self.accumulate(grads, *a, da)?;
            }
            Op::Softmax(a, axis) => {
                let da = match axis {
                    Axis::Row => softmax_row_backward(y, g),
                    Axis::Column => {
                        softmax_row_backward(&y.transpose(), &g.transpose()).transpose()
                    }
                };
                self.accumulate(grads, *a, da)?;
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let va = self.value(*a);
                let n = match axis {
                    Axis::Row => va.cols(),
                    Axis::Column => va.rows(),
                };
                let scale = if matches!(node.op, Op::Mean(..)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let mut da = Tensor::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    for c in 0..va.cols() {
                        let src = match axis {
                            Axis::Row => g.get(r, 0),
                            Axis::Column => g.get(0, c),
                        };
                        da.set(r, c, src * scale);
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::SumAll(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item()?))?;
            }
            Op::Concat(a, b) => {
                let (da, db) = g.split_cols(self.value(*a).cols())?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let mut da = Tensor::zeros(va.rows(), va.cols());
                for r in 0..g.rows() {
                    da.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::GatherRows(table, index) => {
                let vt = self.value(*table);
                let mut dt = Tensor::zeros(vt.rows(), vt.cols());
                for (r, &i) in index.iter().enumerate() {
                    for (o, v) in dt.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *table, dt)?;
            }
            Op::PairSum(a, b) => {
                let (m, n) = (self.value(*a).rows(), self.value(*b).rows());
                let d = g.cols();
                let mut da = Tensor::zeros(m, d);
                let mut db = Tensor::zeros(n, d);
                for i in 0..m {
                    for j in 0..n {
                        let gr = g.row(i * n + j);
                        for (o, v) in da.row_mut(i).iter_mut().zip(gr) {
                            *o += v;
                        }
                        for (o, v) in db.row_mut(j).iter_mut().zip(gr) {
                            *o += v;
                        }
                    }
                }
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Reshape(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::new(r, c, g.data().to_vec())?)?;
            }
            Op::Bce(o, targets) => {
                let scale = g.item()?;
                let d = self.value(*o).zip_map(targets, |p, y| {
                    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    scale * (-(y / p) + (1.0 - y) / (1.0 - p))
                })?;
                self.accumulate(grads, *o, d)?;
            }
        }
        Ok(())
    }
}

/// Clamped logistic function shared by the tape op and plain evaluation.
pub fn sigmoid(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn softmax_row_backward(y: &Tensor, g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), g.row(r));
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (o, (yv, gv)) in out.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
            *o = yv * (gv - dot);
        }
    }
    out
}
