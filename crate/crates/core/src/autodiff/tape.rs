//! Reverse-mode tape over dense `f64` matrices.
//!
//! Every node holds a 2-D array; scalars are `1 x 1`. Binary elementwise
//! operations broadcast a `1 x k` row, an `n x 1` column or a `1 x 1` scalar
//! against an `n x k` operand, and the backward pass sums the adjoint back
//! down to the operand's shape.
//!
//! ```
//! use fhnn::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let w = tape.input_scalar(2.0);
//! let y = (w * 3.0).tanh();
//! let grads = tape.backward(y).unwrap();
//! let dw = grads.wrt(w).unwrap()[[0, 0]];
//! assert!((dw - 3.0 * (1.0 - 6.0f64.tanh().powi(2))).abs() < 1e-15);
//! ```

use std::cell::{Ref, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::{s, Array2, Axis, Zip};

use super::params::{GradMap, ParamStore};
use crate::error::{Error, Result};

pub type Tensor = Array2<f64>;

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Input,
    Param(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Square(usize),
    SumAll(usize),
    MeanAll(usize),
    /// Sum across columns, `n x k -> n x 1`.
    RowSum(usize),
    Column(usize, usize),
    Concat(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a computation. Nodes are only ever pushed after
/// their parents, so index order is a topological order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.idx, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, idx }
    }

    /// A leaf that never receives an adjoint.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Constant, false)
    }

    pub fn constant_scalar(&self, v: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), v))
    }

    /// A column vector constant, `n x 1`.
    pub fn constant_column(&self, values: &[f64]) -> Var<'_> {
        self.constant(Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape"))
    }

    /// A differentiable leaf whose adjoint can be read back with [`Gradients::wrt`].
    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Input, true)
    }

    pub fn input_scalar(&self, v: f64) -> Var<'_> {
        self.input(Array2::from_elem((1, 1), v))
    }

    /// Binds a named parameter from `store` as a differentiable leaf.
    pub fn param(&self, store: &ParamStore, name: &str) -> Result<Var<'_>> {
        let id = store
            .id(name)
            .ok_or_else(|| Error::config(format!("unknown parameter `{name}`")))?;
        Ok(self.push(store.value(id).clone(), Op::Param(id), true))
    }

    /// Stacks `n x 1` columns (or wider blocks) side by side.
    pub fn concat(&self, parts: &[Var<'_>]) -> Var<'_> {
        assert!(!parts.is_empty(), "concat of zero columns");
        let nodes = self.nodes.borrow();
        let rows = nodes[parts[0].idx].value.nrows();
        let cols: usize = parts.iter().map(|p| nodes[p.idx].value.ncols()).sum();
        let mut out = Array2::zeros((rows, cols));
        let mut c = 0;
        for p in parts {
            let v = &nodes[p.idx].value;
            assert_eq!(v.nrows(), rows, "concat row mismatch");
            out.slice_mut(s![.., c..c + v.ncols()]).assign(v);
            c += v.ncols();
        }
        let rg = parts.iter().any(|p| nodes[p.idx].requires_grad);
        drop(nodes);
        self.push(out, Op::Concat(parts.iter().map(|p| p.idx).collect()), rg)
    }

    fn value_of(&self, idx: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[idx].value)
    }

    fn unary(&self, a: usize, f: impl Fn(f64) -> f64, op: Op) -> Var<'_> {
        let (value, rg) = {
            let nodes = self.nodes.borrow();
            (nodes[a].value.mapv(f), nodes[a].requires_grad)
        };
        self.push(value, op, rg)
    }

    fn binary(&self, a: usize, b: usize, f: impl Fn(&Tensor, &Tensor) -> Tensor, op: Op) -> Var<'_> {
        let (value, rg) = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a].value, &nodes[b].value);
            (f(va, vb), nodes[a].requires_grad || nodes[b].requires_grad)
        };
        self.push(value, op, rg)
    }

    /// Runs the reverse sweep from a `1 x 1` root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shape = nodes[root.idx].value.dim();
        if shape != (1, 1) {
            return Err(Error::Usage(format!("backward root must be 1x1, got {shape:?}")));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; nodes.len()];
        adj[root.idx] = Some(Array2::ones((1, 1)));

        for i in (0..=root.idx).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = &node.value;
            let mut send = |j: usize, grad: Tensor| {
                if !nodes[j].requires_grad {
                    return;
                }
                let grad = reduce_to(grad, nodes[j].value.dim());
                match &mut adj[j] {
                    Some(acc) => *acc += &grad,
                    slot @ None => *slot = Some(grad),
                }
            };
            match node.op {
                Op::Constant | Op::Input | Op::Param(_) => {}
                Op::Add(a, b) => {
                    send(a, g.clone());
                    send(b, g.clone());
                }
                Op::Sub(a, b) => {
                    send(a, g.clone());
                    send(b, -&g);
                }
                Op::Mul(a, b) => {
                    send(a, &g * &nodes[b].value);
                    send(b, &g * &nodes[a].value);
                }
                Op::Div(a, b) => {
                    let vb = &nodes[b].value;
                    send(a, &g / vb);
                    send(b, -(&g * y) / vb);
                }
                Op::Neg(a) => send(a, -&g),
                Op::Scale(a, c) => send(a, &g * c),
                Op::Offset(a) => send(a, g.clone()),
                Op::MatMul(a, b) => {
                    send(a, g.dot(&nodes[b].value.t()));
                    send(b, nodes[a].value.t().dot(&g));
                }
                Op::Tanh(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(y).for_each(|d, &t| *d *= 1.0 - t * t);
                    send(a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(y).for_each(|d, &s| *d *= s * (1.0 - s));
                    send(a, d);
                }
                Op::Softplus(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&nodes[a].value).for_each(|d, &z| *d *= sigmoid(z));
                    send(a, d);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d)
                        .and(&nodes[a].value)
                        .for_each(|d, &z| *d = if z > 0.0 { *d } else { 0.0 });
                    send(a, d);
                }
                Op::Exp(a) => send(a, &g * y),
                Op::Ln(a) => send(a, &g / &nodes[a].value),
                Op::Sqrt(a) => {
                    let mut d = g.clone();
                    // subgradient 0 at the origin
                    Zip::from(&mut d)
                        .and(y)
                        .for_each(|d, &r| *d = if r > 0.0 { *d / (2.0 * r) } else { 0.0 });
                    send(a, d);
                }
                Op::Square(a) => send(a, &g * &nodes[a].value * 2.0),
                Op::SumAll(a) => {
                    let dim = nodes[a].value.dim();
                    send(a, Array2::from_elem(dim, g[[0, 0]]));
                }
                Op::MeanAll(a) => {
                    let dim = nodes[a].value.dim();
                    let n = (dim.0 * dim.1) as f64;
                    send(a, Array2::from_elem(dim, g[[0, 0]] / n));
                }
                Op::RowSum(a) => {
                    let dim = nodes[a].value.dim();
                    send(a, g.broadcast(dim).expect("row-sum broadcast").to_owned());
                }
                Op::Column(a, j) => {
                    let mut d = Array2::zeros(nodes[a].value.dim());
                    d.column_mut(j).assign(&g.column(0));
                    send(a, d);
                }
                Op::Concat(ref parts) => {
                    let mut c = 0;
                    for &p in parts {
                        let w = nodes[p].value.ncols();
                        send(p, g.slice(s![.., c..c + w]).to_owned());
                        c += w;
                    }
                }
            }
            adj[i] = Some(g);
        }

        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { adjoints: adj, params })
    }
}

/// Sums a broadcast adjoint back down to the operand's shape.
fn reduce_to(mut g: Tensor, (rows, cols): (usize, usize)) -> Tensor {
    if g.dim() == (rows, cols) {
        return g;
    }
    if rows == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if cols == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    debug_assert_eq!(g.dim(), (rows, cols));
    g
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `max(z, 0) + log1p(exp(-|z|))`, finite for all finite `z`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        _ => panic!("incompatible shapes {a:?} and {b:?}"),
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let shape = broadcast_shape(a.dim(), b.dim());
    let av = a.broadcast(shape).expect("broadcast lhs");
    let bv = b.broadcast(shape).expect("broadcast rhs");
    Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y))
}

/// Adjoints from one reverse sweep.
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` if `v` is not upstream of the root or is a constant.
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.adjoints[v.idx].as_ref()
    }

    /// Parameter gradients shaped like `store`; parameters the root does not
    /// depend on get exact zeros.
    pub fn params(&self, store: &ParamStore) -> GradMap {
        let mut out = store.zeros_like();
        for &(id, node) in &self.params {
            if let Some(g) = &self.adjoints[node] {
                *out.get_mut(id) += g;
            }
        }
        out
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value_of(self.idx)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    /// Copies an `n x 1` column out as a vector.
    pub fn column_values(&self) -> Vec<f64> {
        self.value().column(0).to_vec()
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.idx, rhs.idx, |a, b| a.dot(b), Op::MatMul(self.idx, rhs.idx))
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(self.idx, f64::tanh, Op::Tanh(self.idx))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(self.idx, sigmoid, Op::Sigmoid(self.idx))
    }

    pub fn softplus(self) -> Var<'t> {
        self.tape.unary(self.idx, softplus, Op::Softplus(self.idx))
    }

    pub fn relu(self) -> Var<'t> {
        self.tape.unary(self.idx, |z| z.max(0.0), Op::Relu(self.idx))
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.idx, f64::exp, Op::Exp(self.idx))
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.unary(self.idx, f64::ln, Op::Ln(self.idx))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.unary(self.idx, f64::sqrt, Op::Sqrt(self.idx))
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self.idx, |z| z * z, Op::Square(self.idx))
    }

    pub fn sum(self) -> Var<'t> {
        let (v, rg) = {
            let nodes = self.tape.nodes.borrow();
            (nodes[self.idx].value.sum(), nodes[self.idx].requires_grad)
        };
        self.tape.push(Array2::from_elem((1, 1), v), Op::SumAll(self.idx), rg)
    }

    pub fn mean(self) -> Var<'t> {
        let (v, rg) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.idx];
            (n.value.sum() / n.value.len() as f64, n.requires_grad)
        };
        self.tape.push(Array2::from_elem((1, 1), v), Op::MeanAll(self.idx), rg)
    }

    /// Sum across columns, `n x k -> n x 1`.
    pub fn row_sum(self) -> Var<'t> {
        let (v, rg) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.idx];
            (n.value.sum_axis(Axis(1)).insert_axis(Axis(1)), n.requires_grad)
        };
        self.tape.push(v, Op::RowSum(self.idx), rg)
    }

    pub fn column(self, j: usize) -> Var<'t> {
        let (v, rg) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.idx];
            (n.value.slice(s![.., j..j + 1]).to_owned(), n.requires_grad)
        };
        self.tape.push(v, Op::Column(self.idx, j), rg)
    }

    /// A constant with this node's shape, filled with `v`.
    pub fn full_like(self, v: f64) -> Var<'t> {
        let dim = self.shape();
        self.tape.constant(Array2::from_elem(dim, v))
    }

    pub fn is_finite(&self) -> bool {
        self.value().iter().all(|x| x.is_finite())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:ident, $f:expr) => {
        impl<'t> $trait<Var<'t>> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.tape
                    .binary(self.idx, rhs.idx, |a, b| zip_broadcast(a, b, $f), Op::$op(self.idx, rhs.idx))
            }
        }
    };
}

binop!(Add, add, Add, |x, y| x + y);
binop!(Sub, sub, Sub, |x, y| x - y);
binop!(Mul, mul, Mul, |x, y| x * y);
binop!(Div, div, Div, |x, y| x / y);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self.idx, |z| -z, Op::Neg(self.idx))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.tape.unary(self.idx, |z| z * c, Op::Scale(self.idx, c))
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self * (1.0 / c)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.tape.unary(self.idx, |z| z + c, Op::Offset(self.idx))
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self + (-c)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        -v + self
    }
}
