//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s in execution
//! order. [`Tape::backward`] walks the records in exact reverse order and
//! accumulates gradients into every leaf created with [`Tape::leaf`].
//! Values created with [`Tape::constant`] never receive gradients, and no
//! gradient work is done for subgraphs that depend only on constants.
//!
//! The tape is meant to be rebuilt every iteration: the loss graph changes
//! from batch to batch, so there is nothing to gain from reusing it.
//!
//! ```
//! use sga::tape::Tape;
//! use sga::tensor::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
//! let loss = x.mul(x).unwrap().sum().unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```
//!
//! Elementwise binary operations accept operands of identical shape, or one
//! single-element operand that is broadcast against the other. There is no
//! other broadcasting; [`Var::bias_add`] is the one row-broadcast primitive,
//! needed for affine layers.

use std::cell::{Ref, RefCell};
use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Exp(usize),
    Log(usize),
    Pow(usize, f64),
    Sigmoid(usize),
    Relu(usize),
    Tanh(usize),
    Scale(usize, f64),
    Shift(usize),
    Clamp(usize, f64, f64),
    SqrtClamped(usize),
    Sum(usize, Option<usize>),
    Mean(usize, Option<usize>),
    GradReverse(usize, f64),
    BiasAdd(usize, usize),
    SqDist(usize, usize),
    LogSoftmax(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Tape-independent index of a recorded node. Turn it back into a [`Var`]
/// with [`Tape::var`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when it is not a leaf or the loss does
    /// not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.by_node.get(var.id).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but returns zeros for unreached leaves.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Handle for a node recorded earlier on this tape.
    pub fn var(&self, id: NodeId) -> Var<'_> {
        assert!(id.0 < self.len(), "node {} is not on this tape", id.0);
        Var { tape: self, id: id.0 }
    }

    /// Records a differentiable input (a parameter).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Records a non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Exact reverse-mode gradients of `loss` with respect to every leaf.
    ///
    /// Visits nodes in reverse recording order, so repeated calls on the
    /// same tape are bit-for-bit identical.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, loss.tape), "loss recorded on another tape");
        let nodes = self.nodes.borrow();
        if !nodes[loss.id].value.is_scalar() {
            return Err(Error::shape("backward", nodes[loss.id].value.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            for (input, contribution) in local_gradients(&nodes, node, &g) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        // Only leaves keep their entries.
        for (id, node) in nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[id] = None;
            }
        }
        Ok(Gradients { by_node: grads })
    }
}

/// Gradient contributions `(input id, dL/d input)` for one node.
fn local_gradients(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |id: usize| &nodes[id].value;
    let out = &node.value;
    match node.op {
        Op::Leaf | Op::Constant => Vec::new(),
        Op::MatMul(a, b) => {
            let ga = g
                .matmul(&val(b).transpose().expect("rank 2"))
                .expect("shapes checked in forward");
            let gb = val(a)
                .transpose()
                .expect("rank 2")
                .matmul(g)
                .expect("shapes checked in forward");
            vec![(a, ga), (b, gb)]
        }
        Op::Add(a, b) => vec![
            (a, unbroadcast(g.clone(), val(a))),
            (b, unbroadcast(g.clone(), val(b))),
        ],
        Op::Sub(a, b) => vec![
            (a, unbroadcast(g.clone(), val(a))),
            (b, unbroadcast(g.map(|x| -x), val(b))),
        ],
        Op::Mul(a, b) => {
            let ga = zip_broadcast(g, val(b), |gi, bi| gi * bi);
            let gb = zip_broadcast(g, val(a), |gi, ai| gi * ai);
            vec![(a, unbroadcast(ga, val(a))), (b, unbroadcast(gb, val(b)))]
        }
        Op::Neg(a) => vec![(a, g.map(|x| -x))],
        Op::Exp(a) => vec![(a, zip(g, out, |gi, o| gi * o))],
        Op::Log(a) => vec![(a, zip(g, val(a), |gi, x| gi / x))],
        Op::Pow(a, e) => vec![(a, zip(g, val(a), |gi, x| gi * e * x.powf(e - 1.0)))],
        Op::Sigmoid(a) => vec![(a, zip(g, out, |gi, s| gi * s * (1.0 - s)))],
        Op::Relu(a) => vec![(a, zip(g, val(a), |gi, x| if x > 0.0 { gi } else { 0.0 }))],
        Op::Tanh(a) => vec![(a, zip(g, out, |gi, t| gi * (1.0 - t * t)))],
        Op::Scale(a, c) => vec![(a, g.map(|x| x * c))],
        Op::Shift(a) => vec![(a, g.clone())],
        Op::Clamp(a, lo, hi) => vec![(
            a,
            zip(g, val(a), |gi, x| if (lo..=hi).contains(&x) { gi } else { 0.0 }),
        )],
        Op::SqrtClamped(a) => vec![(a, zip(g, out, |gi, r| if r > 0.0 { gi / (2.0 * r) } else { 0.0 }))],
        Op::Sum(a, axis) => vec![(a, spread(g, val(a), axis, 1.0))],
        Op::Mean(a, axis) => {
            let n = match axis {
                None => val(a).len(),
                Some(k) => val(a).shape()[k],
            };
            vec![(a, spread(g, val(a), axis, 1.0 / n as f64))]
        }
        Op::GradReverse(a, lambda) => vec![(a, g.map(|x| -lambda * x))],
        Op::BiasAdd(x, b) => {
            let cols = val(x).cols();
            let mut gb = vec![0.0; cols];
            for row in g.data().chunks(cols) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let gb = Tensor::new(val(b).shape().to_vec(), gb).expect("bias shape");
            vec![(x, g.clone()), (b, gb)]
        }
        Op::SqDist(a, b) => {
            let (ta, tb) = (val(a), val(b));
            let (na, nb, d) = (ta.rows(), tb.rows(), ta.cols());
            let mut ga = vec![0.0; na * d];
            let mut gb = vec![0.0; nb * d];
            for i in 0..na {
                let ai = ta.row(i);
                for j in 0..nb {
                    let w = 2.0 * g.data()[i * nb + j];
                    if w == 0.0 {
                        continue;
                    }
                    let bj = tb.row(j);
                    for k in 0..d {
                        let diff = ai[k] - bj[k];
                        ga[i * d + k] += w * diff;
                        gb[j * d + k] -= w * diff;
                    }
                }
            }
            vec![
                (a, Tensor::new(ta.shape().to_vec(), ga).expect("shape")),
                (b, Tensor::new(tb.shape().to_vec(), gb).expect("shape")),
            ]
        }
        Op::LogSoftmax(a) => {
            let cols = out.cols();
            let mut ga = Vec::with_capacity(out.len());
            for (g_row, o_row) in g.data().chunks(cols).zip(out.data().chunks(cols)) {
                let total: f64 = g_row.iter().sum();
                ga.extend(g_row.iter().zip(o_row).map(|(gi, o)| gi - o.exp() * total));
            }
            vec![(a, Tensor::new(out.shape().to_vec(), ga).expect("shape"))]
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip of equal shapes")
}

/// Elementwise `f(a, b)` where either side may be a single element.
fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.len() == b.len() {
        let shape = if a.rank() >= b.rank() {
            a.shape()
        } else {
            b.shape()
        };
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(shape.to_vec(), data).expect("equal lengths")
    } else if b.is_scalar() {
        let y = b.data()[0];
        a.map(|x| f(x, y))
    } else {
        let x = a.data()[0];
        b.map(|y| f(x, y))
    }
}

/// Folds a gradient back onto the shape of a possibly broadcast operand.
fn unbroadcast(g: Tensor, operand: &Tensor) -> Tensor {
    if g.len() == operand.len() {
        Tensor::new(operand.shape().to_vec(), g.into_data()).expect("same length")
    } else {
        Tensor::full(operand.shape(), g.sum())
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Gradient of a reduction: copies `g` back over the reduced axis, times `factor`.
fn spread(g: &Tensor, input: &Tensor, axis: Option<usize>, factor: f64) -> Tensor {
    match axis {
        None => Tensor::full(input.shape(), g.data()[0] * factor),
        Some(k) => {
            let (outer, n, inner) = axis_split(input.shape(), k);
            let mut data = vec![0.0; input.len()];
            for o in 0..outer {
                for r in 0..n {
                    for i in 0..inner {
                        data[(o * n + r) * inner + i] = g.data()[o * inner + i] * factor;
                    }
                }
            }
            Tensor::new(input.shape().to_vec(), data).expect("input shape")
        }
    }
}

fn check_finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(Error::Numeric(op.to_string()))
    }
}

// Fallible, so not the std operator traits.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn node(&self) -> NodeId {
        NodeId(self.id)
    }

    /// Borrow of the recorded value. Drop it before recording new operations.
    pub fn value_ref(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Copy of the recorded value, detached from the tape.
    pub fn value(&self) -> Tensor {
        self.value_ref().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value_ref().shape().to_vec()
    }

    /// The value of a single-element variable.
    pub fn item(&self) -> Result<f64> {
        let v = self.value_ref();
        v.item().ok_or_else(|| Error::shape("item", v.shape(), &[]))
    }

    fn same_tape(&self, other: Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        let value = check_finite(name, self.value_ref().map(f))?;
        let rg = self.tape.requires_grad(self.id);
        Ok(self.tape.push(value, op, rg))
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(other);
        let value = {
            let (a, b) = (self.value_ref(), other.value_ref());
            if a.shape() != b.shape() && !a.is_scalar() && !b.is_scalar() {
                return Err(Error::shape(name, a.shape(), b.shape()));
            }
            check_finite(name, zip_broadcast(&a, &b, f))?
        };
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        Ok(self.tape.push(value, op, rg))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other);
        let value = self.value_ref().matmul(&other.value_ref())?;
        let value = check_finite("matmul", value)?;
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.unary("neg", Op::Neg(self.id), |x| -x)
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    /// Natural log; every element must be strictly positive.
    pub fn log(self) -> Result<Var<'t>> {
        if let Some(bad) = self.value_ref().data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("argument {bad} is not positive"),
            });
        }
        self.unary("log", Op::Log(self.id), f64::ln)
    }

    /// `x^exponent` for a constant exponent. Negative bases need an integer exponent.
    pub fn powf(self, exponent: f64) -> Result<Var<'t>> {
        if exponent.fract() != 0.0 {
            if let Some(bad) = self.value_ref().data().iter().find(|&&x| x < 0.0) {
                return Err(Error::Domain {
                    op: "pow",
                    detail: format!("negative base {bad} with exponent {exponent}"),
                });
            }
        }
        self.unary("pow", Op::Pow(self.id, exponent), |x| x.powf(exponent))
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary("sigmoid", Op::Sigmoid(self.id), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary("relu", Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary("tanh", Op::Tanh(self.id), f64::tanh)
    }

    /// Multiplies by a constant.
    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary("scale", Op::Scale(self.id, c), |x| x * c)
    }

    /// Adds a constant.
    pub fn shift(self, c: f64) -> Result<Var<'t>> {
        self.unary("shift", Op::Shift(self.id), |x| x + c)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'t>> {
        self.unary("clamp", Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    /// `sqrt(max(x, 0))` with zero gradient wherever the clamp is active.
    pub fn sqrt_clamped(self) -> Result<Var<'t>> {
        self.unary("sqrt", Op::SqrtClamped(self.id), |x| x.max(0.0).sqrt())
    }

    /// Sum over all elements (`axis = None`) or along one axis.
    pub fn sum_axis(self, axis: Option<usize>) -> Result<Var<'t>> {
        self.reduce("sum", axis, false)
    }

    pub fn mean_axis(self, axis: Option<usize>) -> Result<Var<'t>> {
        self.reduce("mean", axis, true)
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.sum_axis(None)
    }

    pub fn mean(self) -> Result<Var<'t>> {
        self.mean_axis(None)
    }

    fn reduce(self, name: &'static str, axis: Option<usize>, mean: bool) -> Result<Var<'t>> {
        let value = {
            let v = self.value_ref();
            if v.is_empty() {
                return Err(Error::EmptyInput(name));
            }
            match axis {
                None => {
                    let s = v.sum();
                    Tensor::scalar(if mean { s / v.len() as f64 } else { s })
                }
                Some(k) if k < v.rank() => {
                    let (outer, n, inner) = axis_split(v.shape(), k);
                    let mut out = vec![0.0; outer * inner];
                    for o in 0..outer {
                        for r in 0..n {
                            for i in 0..inner {
                                out[o * inner + i] += v.data()[(o * n + r) * inner + i];
                            }
                        }
                    }
                    if mean {
                        out.iter_mut().for_each(|x| *x /= n as f64);
                    }
                    let mut shape = v.shape().to_vec();
                    shape.remove(k);
                    Tensor::new(shape, out)?
                }
                Some(k) => {
                    return Err(Error::shape(name, v.shape(), &[k]));
                }
            }
        };
        let value = check_finite(name, value)?;
        let op = if mean {
            Op::Mean(self.id, axis)
        } else {
            Op::Sum(self.id, axis)
        };
        let rg = self.tape.requires_grad(self.id);
        Ok(self.tape.push(value, op, rg))
    }

    /// Identity on the way forward; multiplies the incoming gradient by
    /// `-lambda` on the way back.
    pub fn gradient_reverse(self, lambda: f64) -> Result<Var<'t>> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "gradient reversal scale must be positive, got {lambda}"
            )));
        }
        let value = self.value();
        let rg = self.tape.requires_grad(self.id);
        Ok(self.tape.push(value, Op::GradReverse(self.id, lambda), rg))
    }

    /// Adds a bias row vector (`[n]` or `[1, n]`) to every row of an `[m, n]` matrix.
    pub fn bias_add(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(bias);
        let value = {
            let (x, b) = (self.value_ref(), bias.value_ref());
            if x.rank() != 2 || b.len() != x.cols() || b.rank() > 2 {
                return Err(Error::shape("bias_add", x.shape(), b.shape()));
            }
            let mut out = x.clone();
            let cols = x.cols();
            for row in out.data_mut().chunks_mut(cols) {
                for (o, bi) in row.iter_mut().zip(b.data()) {
                    *o += bi;
                }
            }
            check_finite("bias_add", out)?
        };
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(bias.id);
        Ok(self.tape.push(value, Op::BiasAdd(self.id, bias.id), rg))
    }

    /// Pairwise squared Euclidean distances between the rows of two matrices.
    pub fn sq_dist(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other);
        let value = {
            let (a, b) = (self.value_ref(), other.value_ref());
            if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() {
                return Err(Error::shape("sq_dist", a.shape(), b.shape()));
            }
            squared_distances(&a, &b)
        };
        let value = check_finite("sq_dist", value)?;
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        Ok(self.tape.push(value, Op::SqDist(self.id, other.id), rg))
    }

    /// Row-wise log-softmax of an `[m, c]` matrix.
    pub fn log_softmax(self) -> Result<Var<'t>> {
        let value = {
            let x = self.value_ref();
            if x.rank() != 2 || x.is_empty() {
                return Err(Error::shape("log_softmax", x.shape(), &[2]));
            }
            let cols = x.cols();
            let mut out = Vec::with_capacity(x.len());
            for row in x.data().chunks(cols) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                out.extend(row.iter().map(|v| v - lse));
            }
            check_finite("log_softmax", Tensor::new(x.shape().to_vec(), out)?)?
        };
        let rg = self.tape.requires_grad(self.id);
        Ok(self.tape.push(value, Op::LogSoftmax(self.id), rg))
    }
}

/// `out[i][j] = |a_i - b_j|^2`, summed in row-major order.
pub fn squared_distances(a: &Tensor, b: &Tensor) -> Tensor {
    let (na, nb) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(na * nb);
    for i in 0..na {
        let ai = a.row(i);
        for j in 0..nb {
            out.push(ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum());
        }
    }
    Tensor::new(vec![na, nb], out).expect("na * nb elements")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let tape = Tape::new();
        let x = Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 4.0]]).unwrap();
        let i = tape.constant(Tensor::eye(2));
        let y = i.matmul(tape.constant(x.clone())).unwrap();
        assert_eq!(y.value(), x);
    }

    #[test]
    fn elementwise_values() {
        let tape = Tape::new();
        let z = tape.scalar(0.0);
        assert_eq!(z.sigmoid().unwrap().item().unwrap(), 0.5);
        assert_eq!(z.exp().unwrap().item().unwrap(), 1.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = x.sigmoid().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item().unwrap(), 0.25);
    }

    #[test]
    fn log_domain_error() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[1.0, 0.0]));
        assert!(matches!(x.log(), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn pow_domain_error_and_overflow() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[-1.0]));
        assert!(matches!(x.powf(0.5), Err(Error::Domain { .. })));
        assert_eq!(x.powf(2.0).unwrap().item().unwrap(), 1.0);
        let big = tape.leaf(vec1(&[1e300]));
        assert!(matches!(big.powf(3.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn reductions() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[2.0, 4.0, 6.0]));
        let m = x.mean().unwrap();
        assert_eq!(m.item().unwrap(), 4.0);
        let g = tape.backward(m).unwrap();
        for &v in g.get(x).unwrap().data() {
            assert_eq!(v, 1.0 / 3.0);
        }
        let z = tape.constant(Tensor::zeros(&[3, 2]));
        assert_eq!(z.sum().unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn reduce_axis_shapes() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap());
        assert_eq!(x.sum_axis(Some(0)).unwrap().value().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(x.mean_axis(Some(1)).unwrap().value().data(), &[2.0, 5.0]);
        assert!(matches!(x.sum_axis(Some(2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn empty_reduction_errors() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[0, 3]));
        assert!(matches!(x.sum(), Err(Error::EmptyInput("sum"))));
    }

    #[test]
    fn backward_basic_cases() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[1.0, 2.0]));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0]);
        let g = tape.backward(x.mul(x).unwrap().sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn grl_identity_forward_negated_backward() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[0.5, -1.5, 3.0]));
        let r = x.gradient_reverse(1.0).unwrap();
        assert_eq!(r.value(), x.value());
        let g = tape.backward(r.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[-1.0, -1.0, -1.0]);
    }

    #[test]
    fn grl_rejects_nonpositive_lambda() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[1.0]));
        assert!(matches!(x.gradient_reverse(0.0), Err(Error::Config(_))));
        assert!(matches!(x.gradient_reverse(-1.0), Err(Error::Config(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(vec1(&[1.0, 2.0]));
        let x = tape.leaf(vec1(&[3.0, 4.0]));
        let g = tape.backward(c.mul(x).unwrap().sum().unwrap()).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn scalar_broadcast_gradients() {
        let tape = Tape::new();
        let s = tape.leaf(Tensor::scalar(2.0));
        let x = tape.leaf(vec1(&[1.0, 2.0, 3.0]));
        let y = x.mul(s).unwrap().sum().unwrap();
        assert_eq!(y.item().unwrap(), 12.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(s).unwrap().item().unwrap(), 6.0);
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn mismatched_elementwise_shapes() {
        let tape = Tape::new();
        let a = tape.leaf(vec1(&[1.0, 2.0]));
        let b = tape.leaf(vec1(&[1.0, 2.0, 3.0]));
        assert!(matches!(a.add(b), Err(Error::Shape { op: "add", .. })));
    }

    #[test]
    fn sqrt_clamp_has_zero_subgradient() {
        let tape = Tape::new();
        let x = tape.leaf(vec1(&[-1e-17, 4.0]));
        let y = x.sqrt_clamped().unwrap();
        assert_eq!(y.value().data(), &[0.0, 2.0]);
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.25]);
    }
}
