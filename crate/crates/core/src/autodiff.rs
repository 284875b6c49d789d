//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation appends a record to a [`Graph`]. Backpropagation walks the
//! records in reverse and expresses each vector-Jacobian product with the
//! same graph operations, so the gradients it produces are themselves graph
//! nodes. Differentiating an expression that contains such a gradient yields
//! exact second-order derivatives, which is what a gradient penalty on the
//! input of a network needs.
//!
//! ReLU and `abs` use fixed masks in their backward rules: the subgradient at
//! zero is zero and their second derivatives vanish off the kink set.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Whether a graph may hand out differentiable input gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    FirstOrder,
    HigherOrder,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    AddRow(Var, Var),
    SumRows(Var),
    BroadcastRows(Var, usize),
    SumCols(Var),
    BroadcastCols(Var, usize),
    SumAll(Var),
    Expand(Var, Vec<usize>),
    Reshape(Var, Vec<usize>),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Square(Var),
    Abs(Var),
    Sqrt(Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize, usize),
    PadRows(Var, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul { .. } => "matmul",
            Op::AddRow(..) => "add_row",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::SumAll(..) => "sum_all",
            Op::Expand(..) => "expand",
            Op::Reshape(..) => "reshape",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::LogSigmoid(..) => "log_sigmoid",
            Op::Square(..) => "square",
            Op::Abs(..) => "abs",
            Op::Sqrt(..) => "sqrt",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceRows(..) => "slice_rows",
            Op::PadRows(..) => "pad_rows",
        }
    }

    fn inputs(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul { a, b, .. }
            | Op::AddRow(a, b)
            | Op::ConcatRows(a, b) => [Some(a), Some(b)],
            Op::SumRows(a)
            | Op::BroadcastRows(a, _)
            | Op::SumCols(a)
            | Op::BroadcastCols(a, _)
            | Op::SumAll(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Square(a)
            | Op::Abs(a)
            | Op::Sqrt(a)
            | Op::SliceRows(a, ..)
            | Op::PadRows(a, ..) => [Some(a), None],
            Op::Expand(a, _) | Op::Reshape(a, _) => [Some(a), None],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of tensor operations.
///
/// A graph is a single-owner unit; build one per loss evaluation and drop it
/// afterwards.
pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
        }
    }

    pub fn first_order() -> Self {
        Self::new(Mode::FirstOrder)
    }

    pub fn higher_order() -> Self {
        Self::new(Mode::HigherOrder)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf holding `value`.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf for data that is not differentiated against. Equivalent to
    /// [`Graph::leaf`]; gradients only flow to the targets named at backward
    /// time.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value)
    }

    /// Leaf for a trainable parameter or differentiated input.
    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Value of a one-element node.
    pub fn item(&self, v: Var) -> Result<f64> {
        self.nodes[v.0].value.item()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(v.0))
        }
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        for v in op.inputs().into_iter().flatten() {
            self.check(v)?;
        }
        let nodes = &self.nodes;
        let value = eval(&op, &|v: Var| &nodes[v.0].value)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Div(a, b))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Matrix product with optional transposition of either operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        self.push(Op::MatMul { a, b, ta, tb })
    }

    /// Adds a `1×n` row to every row of a `B×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow(x, row))
    }

    /// `B×n → 1×n`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SumRows(x))
    }

    /// `1×n → rows×n`.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        self.push(Op::BroadcastRows(x, rows))
    }

    /// `B×n → B×1`.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SumCols(x))
    }

    /// `B×1 → B×cols`.
    pub fn broadcast_cols(&mut self, x: Var, cols: usize) -> Result<Var> {
        self.push(Op::BroadcastCols(x, cols))
    }

    /// Sum of all entries as a rank-0 tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SumAll(x))
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::Expand(x, shape.to_vec()))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::Reshape(x, shape.to_vec()))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.push(Op::Scale(x, c))
    }

    /// Adds a constant to every entry.
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.push(Op::AddScalar(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sigmoid(x))
    }

    /// `log σ(x)`, evaluated without forming `σ(x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var> {
        self.push(Op::LogSigmoid(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Square(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Abs(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sqrt(x))
    }

    /// Stacks two matrices of equal width along the batch axis.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::ConcatRows(a, b))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::SliceRows(x, start, len))
    }

    /// Places `x` at row `start` of a zero matrix with `total` rows.
    pub fn pad_rows(&mut self, x: Var, start: usize, total: usize) -> Result<Var> {
        self.push(Op::PadRows(x, start, total))
    }

    /// Mean of all entries.
    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Empty("mean_all"));
        }
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Mean over `axis` of a matrix: 0 averages rows (`B×n → 1×n`), 1
    /// averages columns (`B×n → B×1`).
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.value(x).require_matrix("mean_axis")?;
        match axis {
            0 => {
                if r == 0 {
                    return Err(Error::Empty("mean_axis"));
                }
                let s = self.sum_rows(x)?;
                self.scale(s, 1.0 / r as f64)
            }
            1 => {
                if c == 0 {
                    return Err(Error::Empty("mean_axis"));
                }
                let s = self.sum_cols(x)?;
                self.scale(s, 1.0 / c as f64)
            }
            _ => Err(Error::InvalidShape {
                shape: self.shape(x).to_vec(),
                reason: format!("axis {axis} out of range"),
            }),
        }
    }

    /// Gradients of a scalar `output` with respect to `targets`, as values.
    ///
    /// Targets that do not influence `output` receive exact zeros.
    pub fn backward(&mut self, output: Var, targets: &[Var]) -> Result<Vec<Tensor>> {
        let grads = self.backprop(output, targets)?;
        Ok(targets
            .iter()
            .zip(grads)
            .map(|(t, g)| match g {
                Some(g) => self.nodes[g.0].value.clone(),
                None => Tensor::zeros(self.nodes[t.0].value.shape()),
            })
            .collect())
    }

    /// Gradients as graph nodes. With `create_graph` the results can be
    /// differentiated again; that requires [`Mode::HigherOrder`].
    pub fn grad(&mut self, output: Var, targets: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        if create_graph && self.mode != Mode::HigherOrder {
            return Err(Error::FirstOrderGraph);
        }
        let grads = self.backprop(output, targets)?;
        targets
            .iter()
            .zip(grads)
            .map(|(t, g)| match g {
                Some(g) => Ok(g),
                None => {
                    let z = Tensor::zeros(self.nodes[t.0].value.shape());
                    self.constant(z)
                }
            })
            .collect()
    }

    /// `∇_input output` as a differentiable node.
    pub fn input_gradient(&mut self, output: Var, input: Var) -> Result<Var> {
        Ok(self.grad(output, &[input], true)?[0])
    }

    fn backprop(&mut self, output: Var, targets: &[Var]) -> Result<Vec<Option<Var>>> {
        self.check(output)?;
        for &t in targets {
            self.check(t)?;
        }
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::NotScalar(self.nodes[output.0].value.shape().to_vec()));
        }

        // Only nodes on a path from some target to the output need a gradient.
        let n = output.0 + 1;
        let mut needed = vec![false; n];
        for &t in targets {
            if t.0 < n {
                needed[t.0] = true;
            }
        }
        for i in 0..n {
            if !needed[i] {
                needed[i] = self.nodes[i]
                    .op
                    .inputs()
                    .into_iter()
                    .flatten()
                    .any(|v| needed[v.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; n];
        if needed[output.0] {
            let seed = Tensor::full(self.nodes[output.0].value.shape(), 1.0);
            grads[output.0] = Some(self.constant(seed)?);
        }
        for i in (0..n).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.vjp(&op, Var(i), g, &needed)? {
                grads[input.0] = Some(match grads[input.0] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution)?,
                });
            }
        }
        Ok(targets
            .iter()
            .map(|t| grads.get(t.0).copied().flatten())
            .collect())
    }

    fn vjp(&mut self, op: &Op, out: Var, g: Var, needed: &[bool]) -> Result<Vec<(Var, Var)>> {
        let want = |v: Var| needed[v.0];
        let mut res = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(a) {
                    res.push((a, g));
                }
                if want(b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    res.push((a, g));
                }
                if want(b) {
                    res.push((b, self.neg(g)?));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    res.push((a, self.mul(g, b)?));
                }
                if want(b) {
                    res.push((b, self.mul(g, a)?));
                }
            }
            Op::Div(a, b) => {
                if want(a) {
                    res.push((a, self.div(g, b)?));
                }
                if want(b) {
                    let q = self.div(out, b)?;
                    let gq = self.mul(g, q)?;
                    res.push((b, self.neg(gq)?));
                }
            }
            Op::MatMul { a, b, ta, tb } => {
                if want(a) {
                    let ga = if ta {
                        self.matmul_t(b, g, tb, true)?
                    } else {
                        self.matmul_t(g, b, false, !tb)?
                    };
                    res.push((a, ga));
                }
                if want(b) {
                    let gb = if tb {
                        self.matmul_t(g, a, true, ta)?
                    } else {
                        self.matmul_t(a, g, !ta, false)?
                    };
                    res.push((b, gb));
                }
            }
            Op::AddRow(x, row) => {
                if want(x) {
                    res.push((x, g));
                }
                if want(row) {
                    res.push((row, self.sum_rows(g)?));
                }
            }
            Op::SumRows(x) => {
                let r = self.value(x).rows();
                res.push((x, self.broadcast_rows(g, r)?));
            }
            Op::BroadcastRows(x, _) => res.push((x, self.sum_rows(g)?)),
            Op::SumCols(x) => {
                let c = self.value(x).cols();
                res.push((x, self.broadcast_cols(g, c)?));
            }
            Op::BroadcastCols(x, _) => res.push((x, self.sum_cols(g)?)),
            Op::SumAll(x) => {
                let shape = self.shape(x).to_vec();
                res.push((x, self.expand(g, &shape)?));
            }
            Op::Expand(x, _) => {
                let shape = self.shape(x).to_vec();
                let s = self.sum_all(g)?;
                res.push((x, self.reshape(s, &shape)?));
            }
            Op::Reshape(x, _) => {
                let shape = self.shape(x).to_vec();
                res.push((x, self.reshape(g, &shape)?));
            }
            Op::Scale(x, c) => res.push((x, self.scale(g, c)?)),
            Op::AddScalar(x, _) => res.push((x, g)),
            Op::Relu(x) => {
                let mask = self.value(x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let m = self.constant(mask)?;
                res.push((x, self.mul(g, m)?));
            }
            Op::Sigmoid(x) => {
                let neg = self.neg(out)?;
                let one_minus = self.add_scalar(neg, 1.0)?;
                let d = self.mul(out, one_minus)?;
                res.push((x, self.mul(g, d)?));
            }
            Op::LogSigmoid(x) => {
                let nx = self.neg(x)?;
                let d = self.sigmoid(nx)?;
                res.push((x, self.mul(g, d)?));
            }
            Op::Square(x) => {
                let two_x = self.scale(x, 2.0)?;
                res.push((x, self.mul(g, two_x)?));
            }
            Op::Abs(x) => {
                let sign = self.value(x).map(|v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                let s = self.constant(sign)?;
                res.push((x, self.mul(g, s)?));
            }
            Op::Sqrt(x) => {
                let half = self.scale(g, 0.5)?;
                res.push((x, self.div(half, out)?));
            }
            Op::ConcatRows(a, b) => {
                let ra = self.value(a).rows();
                let rb = self.value(b).rows();
                if want(a) {
                    res.push((a, self.slice_rows(g, 0, ra)?));
                }
                if want(b) {
                    res.push((b, self.slice_rows(g, ra, rb)?));
                }
            }
            Op::SliceRows(x, start, _) => {
                let total = self.value(x).rows();
                res.push((x, self.pad_rows(g, start, total)?));
            }
            Op::PadRows(x, start, _) => {
                let len = self.value(x).rows();
                res.push((x, self.slice_rows(g, start, len)?));
            }
        }
        Ok(res)
    }

    /// Re-evaluates every record from the stored leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => eval(op, &|v: Var| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Values of all nodes in record order.
    pub fn values(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes.iter().map(|n| &n.value)
    }

    /// Smallest `|x|` over all ReLU inputs recorded so far. Useful for
    /// keeping finite-difference checks away from kinks.
    pub fn min_abs_relu_input(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(
                    self.nodes[x.0]
                        .value
                        .data()
                        .iter()
                        .fold(f64::INFINITY, |m, v| m.min(v.abs())),
                ),
                _ => None,
            })
            .reduce(f64::min)
    }

    /// Name of the operation that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn zip_with(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::with_data(a.shape().to_vec(), data))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// `C = op(A)·op(B)` through a blocked GEMM kernel.
pub(crate) fn matmul_kernel(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    let (ar, ac) = a.require_matrix("matmul")?;
    let (br, bc) = b.require_matrix("matmul")?;
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: vec![m, k],
            rhs: vec![k2, n],
        });
    }
    let mut out = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
        let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
        // SAFETY: strides describe in-bounds views of `a` and `b` as
        // m×k and k×n matrices; `out` is an owned m×n row-major buffer.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Ok(Tensor::with_data(vec![m, n], out))
}

fn eval<'a>(op: &Op, get: &dyn Fn(Var) -> &'a Tensor) -> Result<Tensor> {
    let out = match *op {
        Op::Leaf => unreachable!("leaves are never re-evaluated"),
        Op::Add(a, b) => zip_with("add", get(a), get(b), |x, y| x + y)?,
        Op::Sub(a, b) => zip_with("sub", get(a), get(b), |x, y| x - y)?,
        Op::Mul(a, b) => zip_with("mul", get(a), get(b), |x, y| x * y)?,
        Op::Div(a, b) => zip_with("div", get(a), get(b), |x, y| x / y)?,
        Op::MatMul { a, b, ta, tb } => matmul_kernel(get(a), get(b), ta, tb)?,
        Op::AddRow(x, row) => {
            let (x, row) = (get(x), get(row));
            let (r, c) = x.require_matrix("add_row")?;
            if row.shape() != [1, c] {
                return Err(mismatch("add_row", x, row));
            }
            let rv = row.data();
            let mut data = x.data().to_vec();
            for i in 0..r {
                for (d, b) in data[i * c..(i + 1) * c].iter_mut().zip(rv) {
                    *d += b;
                }
            }
            Tensor::with_data(vec![r, c], data)
        }
        Op::SumRows(x) => {
            let x = get(x);
            let (r, c) = x.require_matrix("sum_rows")?;
            let mut data = vec![0.0; c];
            for i in 0..r {
                for (d, v) in data.iter_mut().zip(x.row(i)) {
                    *d += v;
                }
            }
            Tensor::with_data(vec![1, c], data)
        }
        Op::BroadcastRows(x, rows) => {
            let x = get(x);
            let (r, c) = x.require_matrix("broadcast_rows")?;
            if r != 1 {
                return Err(Error::InvalidShape {
                    shape: x.shape().to_vec(),
                    reason: "broadcast_rows expects a single row".into(),
                });
            }
            let mut data = Vec::with_capacity(rows * c);
            for _ in 0..rows {
                data.extend_from_slice(x.data());
            }
            Tensor::with_data(vec![rows, c], data)
        }
        Op::SumCols(x) => {
            let x = get(x);
            let (r, _) = x.require_matrix("sum_cols")?;
            let data = (0..r).map(|i| x.row(i).iter().sum()).collect();
            Tensor::with_data(vec![r, 1], data)
        }
        Op::BroadcastCols(x, cols) => {
            let x = get(x);
            let (r, c) = x.require_matrix("broadcast_cols")?;
            if c != 1 {
                return Err(Error::InvalidShape {
                    shape: x.shape().to_vec(),
                    reason: "broadcast_cols expects a single column".into(),
                });
            }
            let mut data = Vec::with_capacity(r * cols);
            for &v in x.data() {
                data.extend(std::iter::repeat_n(v, cols));
            }
            Tensor::with_data(vec![r, cols], data)
        }
        Op::SumAll(x) => Tensor::scalar(get(x).data().iter().sum()),
        Op::Expand(x, ref shape) => {
            let x = get(x);
            let v = x.item()?;
            Tensor::full(shape, v)
        }
        Op::Reshape(x, ref shape) => {
            let x = get(x);
            Tensor::new(shape.clone(), x.data().to_vec())?
        }
        Op::Scale(x, c) => get(x).map(|v| v * c),
        Op::AddScalar(x, c) => get(x).map(|v| v + c),
        Op::Relu(x) => get(x).map(|v| if v > 0.0 { v } else { 0.0 }),
        Op::Sigmoid(x) => get(x).map(sigmoid),
        Op::LogSigmoid(x) => get(x).map(log_sigmoid),
        Op::Square(x) => get(x).map(|v| v * v),
        Op::Abs(x) => get(x).map(f64::abs),
        Op::Sqrt(x) => get(x).map(f64::sqrt),
        Op::ConcatRows(a, b) => {
            let (a, b) = (get(a), get(b));
            let (ra, ca) = a.require_matrix("concat_rows")?;
            let (rb, cb) = b.require_matrix("concat_rows")?;
            if ca != cb {
                return Err(mismatch("concat_rows", a, b));
            }
            let mut data = Vec::with_capacity((ra + rb) * ca);
            data.extend_from_slice(a.data());
            data.extend_from_slice(b.data());
            Tensor::with_data(vec![ra + rb, ca], data)
        }
        Op::SliceRows(x, start, len) => get(x).slice_rows(start, len)?,
        Op::PadRows(x, start, total) => {
            let x = get(x);
            let (r, c) = x.require_matrix("pad_rows")?;
            if start + r > total {
                return Err(Error::InvalidShape {
                    shape: x.shape().to_vec(),
                    reason: format!("cannot place {r} rows at {start} within {total}"),
                });
            }
            let mut data = vec![0.0; total * c];
            data[start * c..(start + r) * c].copy_from_slice(x.data());
            Tensor::with_data(vec![total, c], data)
        }
    };
    if !out.is_finite() {
        return Err(Error::NonFinite { op: op.name() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let mut g = Graph::first_order();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0])).unwrap();
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = g.constant(Tensor::scalar(0.0)).unwrap();
        let s = g.sigmoid(z).unwrap();
        assert_eq!(g.item(s).unwrap(), 0.5);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::first_order();
        let x = g.variable(Tensor::scalar(3.0)).unwrap();
        let y = g.square(x).unwrap();
        let grads = g.backward(y, &[x]).unwrap();
        assert_eq!(grads[0].item().unwrap(), 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::first_order();
        let x = g.variable(Tensor::scalar(0.0)).unwrap();
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.backward(y, &[x]).unwrap()[0].item().unwrap(), 0.25);
    }

    #[test]
    fn unrelated_target_gets_zero() {
        let mut g = Graph::first_order();
        let x = g.variable(t(&[1, 2], &[1.0, 2.0])).unwrap();
        let w = g.variable(t(&[1, 2], &[5.0, 5.0])).unwrap();
        let y = g.sum_all(x).unwrap();
        let grads = g.backward(y, &[w, x]).unwrap();
        assert_eq!(grads[0].data(), &[0.0, 0.0]);
        assert_eq!(grads[1].data(), &[1.0, 1.0]);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut g = Graph::first_order();
        let x = g.variable(t(&[2], &[1.0, 2.0])).unwrap();
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y, &[x]), Err(Error::NotScalar(_))));
    }

    #[test]
    fn unknown_target_rejected() {
        let mut g = Graph::first_order();
        let x = g.variable(Tensor::scalar(1.0)).unwrap();
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y, &[Var(99)]), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut g = Graph::first_order();
        let a = g.constant(t(&[2, 3], &[0.0; 6])).unwrap();
        let b = g.constant(t(&[2, 3], &[0.0; 6])).unwrap();
        assert!(matches!(g.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        let c = g.constant(t(&[3], &[0.0; 3])).unwrap();
        assert!(matches!(g.add(a, c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_result_is_an_error() {
        let mut g = Graph::first_order();
        let a = g.constant(Tensor::scalar(1.0)).unwrap();
        let b = g.constant(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(g.div(a, b), Err(Error::NonFinite { op: "div" })));
        let n = g.constant(Tensor::scalar(-1.0)).unwrap();
        assert!(matches!(g.sqrt(n), Err(Error::NonFinite { op: "sqrt" })));
    }

    #[test]
    fn input_gradient_needs_higher_order() {
        let mut g = Graph::first_order();
        let x = g.variable(Tensor::scalar(1.0)).unwrap();
        let y = g.square(x).unwrap();
        assert!(matches!(g.input_gradient(y, x), Err(Error::FirstOrderGraph)));
    }

    #[test]
    fn linear_input_gradient_and_unit_penalty() {
        let mut g = Graph::higher_order();
        let w = g.variable(t(&[2, 1], &[0.6, 0.8])).unwrap();
        let x = g.variable(t(&[1, 2], &[3.0, -7.0])).unwrap();
        let d = g.matmul(x, w).unwrap();
        let s = g.sum_all(d).unwrap();
        let gx = g.input_gradient(s, x).unwrap();
        let gv = g.value(gx).data().to_vec();
        assert!((gv[0] - 0.6).abs() < 1e-15 && (gv[1] - 0.8).abs() < 1e-15);
        let sq = g.square(gx).unwrap();
        let norm2 = g.sum_all(sq).unwrap();
        let dev = g.add_scalar(norm2, -1.0).unwrap();
        let pen = g.square(dev).unwrap();
        assert!(g.item(pen).unwrap().abs() < 1e-15);
        let gw = g.backward(pen, &[w]).unwrap();
        assert!(gw[0].data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn second_derivative_of_cube() {
        // d²/dx² x³ = 6x
        let mut g = Graph::higher_order();
        let x = g.variable(Tensor::scalar(2.0)).unwrap();
        let x2 = g.square(x).unwrap();
        let x3 = g.mul(x2, x).unwrap();
        let dx = g.input_gradient(x3, x).unwrap();
        assert_eq!(g.item(dx).unwrap(), 12.0);
        let d2 = g.backward(dx, &[x]).unwrap();
        assert_eq!(d2[0].item().unwrap(), 12.0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut g = Graph::higher_order();
        let x = g.variable(t(&[2, 2], &[0.3, -1.2, 2.5, 0.7])).unwrap();
        let w = g.variable(t(&[2, 2], &[1.1, -0.4, 0.2, 0.9])).unwrap();
        let h = g.matmul(x, w).unwrap();
        let r = g.relu(h).unwrap();
        let s = g.sigmoid(r).unwrap();
        let l = g.mean_all(s).unwrap();
        let gx = g.input_gradient(l, x).unwrap();
        let p = g.sum_all(gx).unwrap();
        g.backward(p, &[w]).unwrap();
        let replayed = g.replay().unwrap();
        for (a, b) in replayed.iter().zip(g.values()) {
            let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((sigmoid(-800.0)).is_finite());
    }
}
