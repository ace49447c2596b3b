use std::collections::HashMap;
use std::ops::Range;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along rows (down a column).
    Rows,
    /// Along columns (across a row).
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Second operand is `1 × 1` and broadcast.
    AddScalar(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Elu(Var),
    Softmax(Var, Axis),
    Concat(Vec<Var>, Axis),
    Slice(Var, Range<usize>, Range<usize>),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of operations in creation order, which is a topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// A constant: never differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable leaf that is not a stored parameter.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds the named parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?
            .clone();
        let v = self.push(t, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let out = x.zip_map(y, |p, q| p + q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let out = x.zip_map(y, |p, q| p - q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let out = x.zip_map(y, |p, q| p * q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    fn scalar_of(&self, op: &'static str, s: Var) -> Result<f64> {
        self.value(s)
            .item()
            .ok_or_else(|| Error::shape(op, format!("expected [1, 1], got {:?}", self.shape(s))))
    }

    /// `a + s` with `s` a `1 × 1` node.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let k = self.scalar_of("add_scalar", s)?;
        let out = self.value(a).map(|v| v + k);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::AddScalar(a, s), rg))
    }

    /// `a · s` with `s` a `1 × 1` node.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let k = self.scalar_of("mul_scalar", s)?;
        let out = self.value(a).map(|v| v * k);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::MulScalar(a, s), rg))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|v| v * k);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(Error::shape("matmul", format!("{:?} · {:?}", x.shape(), y.shape())));
        }
        let out = x.matmul(y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        let rg = self.rg(a);
        self.push(out, Op::Elu(a), rg)
    }

    /// Softmax normalizing along `axis`: `Cols` makes every row sum to one.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let x = self.value(a);
        let out = match axis {
            Axis::Cols => softmax_rows(x),
            Axis::Rows => softmax_rows(&x.transpose()).transpose(),
        };
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a, axis), rg)
    }

    /// Stacks along `axis`: `Rows` stacks vertically, `Cols` side by side.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let [r0, c0] = self.shape(*first);
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let t = self.value(*p);
                    if t.cols() != c0 {
                        return Err(Error::shape("concat", format!("{:?} vs {:?} along rows", [r0, c0], t.shape())));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(rows, c0, data)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for p in parts {
                    let t = self.value(*p);
                    if t.rows() != r0 {
                        return Err(Error::shape("concat", format!("{:?} vs {:?} along cols", [r0, c0], t.shape())));
                    }
                    cols += t.cols();
                }
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for p in parts {
                        data.extend_from_slice(self.value(*p).row_slice(r));
                    }
                }
                Tensor::new(r0, cols, data)?
            }
        };
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Sub-block `rows × cols`.
    pub fn slice(&mut self, a: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var> {
        let x = self.value(a);
        if rows.end > x.rows() || cols.end > x.cols() || rows.start > rows.end || cols.start > cols.end {
            return Err(Error::shape(
                "slice",
                format!("[{rows:?}, {cols:?}] out of {:?}", x.shape()),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            data.extend_from_slice(&x.row_slice(r)[cols.clone()]);
        }
        let out = Tensor::new(rows.len(), cols.len(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Slice(a, rows, cols), rg))
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Result<Var> {
        let rows = self.shape(a)[0];
        self.slice(a, 0..rows, cols)
    }

    pub fn slice_rows(&mut self, a: Var, rows: Range<usize>) -> Result<Var> {
        let cols = self.shape(a)[1];
        self.slice(a, rows, 0..cols)
    }

    /// Rows of `a` in the order given by `index`; rows may repeat.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape("gather_rows", format!("row {bad} out of {:?}", x.shape())));
        }
        let mut data = Vec::with_capacity(index.len() * x.cols());
        for &i in index {
            data.extend_from_slice(x.row_slice(i));
        }
        let out = Tensor::new(index.len(), x.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Gather(a, index.to_vec()), rg))
    }

    /// Same row-major data viewed as `rows × cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let x = self.value(a);
        if rows * cols != x.len() {
            return Err(Error::shape("reshape", format!("{:?} into [{rows}, {cols}]", x.shape())));
        }
        let out = Tensor::new(rows, cols, x.data().to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::scalar(x.data().iter().sum::<f64>() / x.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// `x W + 1 b`: an affine map with a `1 × n` bias added to every row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        let ones = self.constant(Tensor::filled(self.shape(x)[0], 1, 1.0));
        let bias = self.matmul(ones, b)?;
        self.add(xw, bias)
    }

    /// Repeats the `m × 1` column `c` across `n` columns.
    pub fn spread_cols(&mut self, c: Var, n: usize) -> Result<Var> {
        let ones = self.constant(Tensor::filled(1, n, 1.0));
        self.matmul(c, ones)
    }

    /// Gradients of the `1 × 1` node `loss` with respect to every parameter
    /// of `store`; parameters absent from this graph receive zeros.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        store.zero_grad();
        for (name, v) in &self.params {
            if let Some(g) = &grads[v.0] {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    /// Gradients with respect to every node, `None` where no path exists.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::shape(
                "backward",
                format!("loss must be [1, 1], got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Tensor>]) -> Option<&'g mut Tensor> {
        if !self.rg(v) {
            return None;
        }
        let [r, c] = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        // Slices and gathers scatter into the source gradient in place.
        match &node.op {
            Op::Slice(a, rows, cols) => {
                if let Some(acc) = self.slot(*a, grads) {
                    let c = acc.cols();
                    for (i, row) in rows.clone().enumerate() {
                        let dst = &mut acc.data_mut()[row * c + cols.start..row * c + cols.end];
                        for (d, v) in dst.iter_mut().zip(g.row_slice(i)) {
                            *d += v;
                        }
                    }
                }
                return;
            }
            Op::Gather(a, index) => {
                if let Some(acc) = self.slot(*a, grads) {
                    let c = acc.cols();
                    for (k, &i) in index.iter().enumerate() {
                        for (d, v) in acc.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(k)) {
                            *d += v;
                        }
                    }
                }
                return;
            }
            _ => {}
        }
        let mut send = |v: Var, d: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&d),
                slot @ None => *slot = Some(d),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                send(*a, g.zip_map(self.value(*b), |p, q| p * q));
                send(*b, g.zip_map(self.value(*a), |p, q| p * q));
            }
            Op::AddScalar(a, s) => {
                send(*a, g.clone());
                send(*s, Tensor::scalar(g.data().iter().sum()));
            }
            Op::MulScalar(a, s) => {
                let k = self.value(*s).data()[0];
                send(*a, g.map(|v| v * k));
                let dot = g.data().iter().zip(self.value(*a).data()).map(|(p, q)| p * q).sum();
                send(*s, Tensor::scalar(dot));
            }
            Op::Scale(a, k) => send(*a, g.map(|v| v * k)),
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    send(*a, g.matmul_nt(self.value(*b)));
                }
                if self.rg(*b) {
                    send(*b, self.value(*a).matmul_tn(g));
                }
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Sigmoid(a) => send(*a, g.zip_map(y, |p, s| p * s * (1.0 - s))),
            Op::Tanh(a) => send(*a, g.zip_map(y, |p, t| p * (1.0 - t * t))),
            Op::Relu(a) => send(*a, g.zip_map(self.value(*a), |p, x| if x > 0.0 { p } else { 0.0 })),
            Op::Elu(a) => send(*a, g.zip_map(y, |p, e| if e > 0.0 { p } else { p * (e + 1.0) })),
            Op::Softmax(a, axis) => {
                let (gt, yt) = match axis {
                    Axis::Cols => (g.clone(), y.clone()),
                    Axis::Rows => (g.transpose(), y.transpose()),
                };
                let cols = yt.cols().max(1);
                let mut d = gt.clone();
                for ((drow, grow), yrow) in d
                    .data_mut()
                    .chunks_mut(cols)
                    .zip(gt.data().chunks(cols))
                    .zip(yt.data().chunks(cols))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(p, q)| p * q).sum();
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *dv = yv * (gv - dot);
                    }
                }
                send(*a, if *axis == Axis::Rows { d.transpose() } else { d });
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for p in parts {
                    let [r, c] = self.shape(*p);
                    let part = match axis {
                        Axis::Rows => {
                            let data = g.data()[offset * g.cols()..(offset + r) * g.cols()].to_vec();
                            offset += r;
                            Tensor::new(r, c, data)
                        }
                        Axis::Cols => {
                            let mut data = Vec::with_capacity(r * c);
                            for row in 0..r {
                                data.extend_from_slice(&g.row_slice(row)[offset..offset + c]);
                            }
                            offset += c;
                            Tensor::new(r, c, data)
                        }
                    };
                    send(*p, part.expect("concat gradient shape"));
                }
            }
            Op::Slice(..) | Op::Gather(..) => unreachable!("handled above"),
            Op::Reshape(a) => {
                let [r, c] = self.shape(*a);
                send(*a, Tensor::new(r, c, g.data().to_vec()).expect("same length"));
            }
            Op::Sum(a) => {
                let [r, c] = self.shape(*a);
                send(*a, Tensor::filled(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let [r, c] = self.shape(*a);
                send(*a, Tensor::filled(r, c, g.data()[0] / (r * c).max(1) as f64));
            }
        }
    }
}
