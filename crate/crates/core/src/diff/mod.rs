//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles together
//! with its output value. [`Tape::backward`] sweeps the record once in
//! reverse, accumulating adjoints. Values are computed by the same `eval`
//! routine at record time and in [`Tape::replay`], so a replay is bitwise
//! identical to the recording.
//!
//! The differentiable loss building blocks (costs, unrolled log-domain
//! Sinkhorn with rounding, moments, closed-form `W₂²`) live in [`ops`].

use std::cell::{Cell, RefCell};

use nalgebra::SymmetricEigen;

use crate::error::{OtError, Result};
use crate::measures::pow_abs;
use crate::sinkhorn::logsumexp;
use crate::Matrix;

pub mod ops;

/// Floor on the row norm in [`Var::row_l2_normalize`].
pub const NORMALIZE_GUARD: f64 = 1e-12;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Recip(usize),
    PowAbs(usize, f64),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    ClampMax(usize, f64),
    ClampMin(usize, f64),
    /// `M×N` plus an `M×1` column broadcast across columns.
    AddCol(usize, usize),
    /// `M×N` plus a `1×N` row broadcast across rows.
    AddRow(usize, usize),
    MulCol(usize, usize),
    MulRow(usize, usize),
    /// Matrix times a `1×1` node.
    MulScalar(usize, usize),
    SumAll(usize),
    RowSums(usize),
    ColSums(usize),
    RowLse(usize),
    ColLse(usize),
    PairwiseCost(usize, usize, f64),
    RowL2Normalize(usize),
    RowSoftmax(usize),
    Sqrtm(usize),
    Trace(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Recip(..) => "recip",
            Op::PowAbs(..) => "pow_abs",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::ClampMax(..) => "clamp_max",
            Op::ClampMin(..) => "clamp_min",
            Op::AddCol(..) => "add_col",
            Op::AddRow(..) => "add_row",
            Op::MulCol(..) => "mul_col",
            Op::MulRow(..) => "mul_row",
            Op::MulScalar(..) => "mul_scalar",
            Op::SumAll(..) => "sum",
            Op::RowSums(..) => "row_sums",
            Op::ColSums(..) => "col_sums",
            Op::RowLse(..) => "row_logsumexp",
            Op::ColLse(..) => "col_logsumexp",
            Op::PairwiseCost(..) => "pairwise_cost",
            Op::RowL2Normalize(..) => "row_l2_normalize",
            Op::RowSoftmax(..) => "row_softmax",
            Op::Sqrtm(..) => "sqrtm",
            Op::Trace(..) => "trace",
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Records primitives for one reverse sweep. Not `Sync`: one tape per thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    first_non_finite: Cell<Option<usize>>,
}

/// Handle to a recorded node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

fn same_shape(a: &Matrix, b: &Matrix, op: &str) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch");
}

fn symmetric_eigen(s: &Matrix) -> (Matrix, Vec<f64>) {
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    (eig.eigenvectors, roots)
}

fn eval<'a>(op: &Op, get: impl Fn(usize) -> &'a Matrix) -> Matrix {
    match *op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::Add(a, b) => {
            same_shape(get(a), get(b), "add");
            get(a) + get(b)
        }
        Op::Sub(a, b) => {
            same_shape(get(a), get(b), "sub");
            get(a) - get(b)
        }
        Op::Mul(a, b) => {
            same_shape(get(a), get(b), "mul");
            get(a).component_mul(get(b))
        }
        Op::Div(a, b) => {
            same_shape(get(a), get(b), "div");
            get(a).component_div(get(b))
        }
        Op::Neg(a) => -get(a),
        Op::Scale(a, c) => get(a) * c,
        Op::Offset(a, c) => get(a).map(|v| v + c),
        Op::MatMul(a, b) => {
            assert_eq!(
                get(a).ncols(),
                get(b).nrows(),
                "matmul: inner dimension mismatch"
            );
            get(a) * get(b)
        }
        Op::Transpose(a) => get(a).transpose(),
        Op::Exp(a) => get(a).map(f64::exp),
        Op::Log(a) => get(a).map(f64::ln),
        Op::Sqrt(a) => get(a).map(f64::sqrt),
        Op::Recip(a) => get(a).map(|v| 1.0 / v),
        Op::PowAbs(a, p) => get(a).map(|v| pow_abs(v, p)),
        Op::Relu(a) => get(a).map(|v| v.max(0.0)),
        Op::Tanh(a) => get(a).map(f64::tanh),
        Op::Sigmoid(a) => get(a).map(|v| 1.0 / (1.0 + (-v).exp())),
        Op::ClampMax(a, c) => get(a).map(|v| v.min(c)),
        Op::ClampMin(a, c) => get(a).map(|v| v.max(c)),
        Op::AddCol(a, v) => {
            let (m, n) = get(a).shape();
            assert_eq!(get(v).shape(), (m, 1), "add_col: expected a column");
            let (a, v) = (get(a), get(v));
            Matrix::from_fn(m, n, |i, j| a[(i, j)] + v[(i, 0)])
        }
        Op::AddRow(a, v) => {
            let (m, n) = get(a).shape();
            assert_eq!(get(v).shape(), (1, n), "add_row: expected a row");
            let (a, v) = (get(a), get(v));
            Matrix::from_fn(m, n, |i, j| a[(i, j)] + v[(0, j)])
        }
        Op::MulCol(a, v) => {
            let (m, n) = get(a).shape();
            assert_eq!(get(v).shape(), (m, 1), "mul_col: expected a column");
            let (a, v) = (get(a), get(v));
            Matrix::from_fn(m, n, |i, j| a[(i, j)] * v[(i, 0)])
        }
        Op::MulRow(a, v) => {
            let (m, n) = get(a).shape();
            assert_eq!(get(v).shape(), (1, n), "mul_row: expected a row");
            let (a, v) = (get(a), get(v));
            Matrix::from_fn(m, n, |i, j| a[(i, j)] * v[(0, j)])
        }
        Op::MulScalar(a, s) => {
            assert_eq!(get(s).shape(), (1, 1), "mul_scalar: expected 1x1");
            let s = get(s)[(0, 0)];
            get(a).map(|v| v * s)
        }
        Op::SumAll(a) => Matrix::from_element(1, 1, get(a).iter().sum()),
        Op::RowSums(a) => {
            let a = get(a);
            Matrix::from_fn(a.nrows(), 1, |i, _| a.row(i).iter().sum())
        }
        Op::ColSums(a) => {
            let a = get(a);
            Matrix::from_fn(1, a.ncols(), |_, j| a.column(j).iter().sum())
        }
        Op::RowLse(a) => {
            let a = get(a);
            let n = a.ncols();
            Matrix::from_fn(a.nrows(), 1, |i, _| logsumexp((0..n).map(|j| a[(i, j)])))
        }
        Op::ColLse(a) => {
            let a = get(a);
            let m = a.nrows();
            Matrix::from_fn(1, a.ncols(), |_, j| logsumexp((0..m).map(|i| a[(i, j)])))
        }
        Op::PairwiseCost(x, y, p) => {
            let (x, y) = (get(x), get(y));
            assert_eq!(x.ncols(), y.ncols(), "pairwise_cost: dimension mismatch");
            let d = x.ncols();
            Matrix::from_fn(x.nrows(), y.nrows(), |i, j| {
                (0..d).map(|k| pow_abs(x[(i, k)] - y[(j, k)], p)).sum()
            })
        }
        Op::RowL2Normalize(a) => {
            let a = get(a);
            let mut out = a.clone();
            for mut row in out.row_iter_mut() {
                let s = row.norm().max(NORMALIZE_GUARD);
                row /= s;
            }
            out
        }
        Op::RowSoftmax(a) => {
            let a = get(a);
            let mut out = a.clone();
            for mut row in out.row_iter_mut() {
                let max = row.max();
                row.apply(|v| *v = (*v - max).exp());
                let s = row.sum();
                row /= s;
            }
            out
        }
        Op::Sqrtm(a) => {
            let (v, roots) = symmetric_eigen(get(a));
            let d = roots.len();
            &v * Matrix::from_fn(d, d, |i, j| if i == j { roots[i] } else { 0.0 }) * v.transpose()
        }
        Op::Trace(a) => {
            assert!(get(a).is_square(), "trace: expected a square matrix");
            Matrix::from_element(1, 1, get(a).trace())
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, op: Op) -> usize {
        let value = {
            let nodes = self.nodes.borrow();
            eval(&op, |i| &nodes[i].value)
        };
        self.push_node(op, value)
    }

    fn push_node(&self, op: Op, value: Matrix) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.first_non_finite.get().is_none() && value.iter().any(|v| !v.is_finite()) {
            self.first_non_finite.set(Some(id));
        }
        nodes.push(Node { op, value });
        id
    }

    fn wrap(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    /// Records a leaf. Parameters and constants are both leaves; only the
    /// ones passed to [`Gradients::wrt`] are read back.
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        let id = self.push_node(Op::Leaf, value);
        self.wrap(id)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Matrix::from_element(1, 1, value))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fails on the first recorded node holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite.get() {
            None => Ok(()),
            Some(node) => Err(OtError::NonFinite {
                node,
                op: self.nodes.borrow()[node].op.name(),
            }),
        }
    }

    /// Re-evaluates every non-leaf node from its recorded inputs.
    pub fn replay(&self) -> Vec<Matrix> {
        let nodes = self.nodes.borrow();
        let mut out: Vec<Matrix> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => eval(op, |i| &out[i]),
            };
            out.push(v);
        }
        out
    }

    /// Recorded values in node order.
    pub fn values(&self) -> Vec<Matrix> {
        self.nodes
            .borrow()
            .iter()
            .map(|n| n.value.clone())
            .collect()
    }

    /// Reverse sweep from a `1×1` output.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[output.id].value.shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut adj: Vec<Option<Matrix>> = vec![None; output.id + 1];
        adj[output.id] = Some(Matrix::from_element(1, 1, 1.0));
        for id in (0..=output.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            propagate(&node.op, &node.value, &g, &nodes, &mut adj);
            adj[id] = Some(g);
        }
        Gradients { adj }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut adj[id] {
        Some(acc) => *acc += g,
        slot @ None => *slot = Some(g),
    }
}

fn propagate(op: &Op, out: &Matrix, g: &Matrix, nodes: &[Node], adj: &mut [Option<Matrix>]) {
    let val = |i: usize| &nodes[i].value;
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(adj, a, g.clone());
            accumulate(adj, b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(adj, a, g.clone());
            accumulate(adj, b, -g);
        }
        Op::Mul(a, b) => {
            accumulate(adj, a, g.component_mul(val(b)));
            accumulate(adj, b, g.component_mul(val(a)));
        }
        Op::Div(a, b) => {
            let gb = g.component_div(val(b));
            accumulate(adj, b, -gb.component_mul(out));
            accumulate(adj, a, gb);
        }
        Op::Neg(a) => accumulate(adj, a, -g),
        Op::Scale(a, c) => accumulate(adj, a, g * c),
        Op::Offset(a, _) => accumulate(adj, a, g.clone()),
        Op::MatMul(a, b) => {
            accumulate(adj, a, g * val(b).transpose());
            accumulate(adj, b, val(a).transpose() * g);
        }
        Op::Transpose(a) => accumulate(adj, a, g.transpose()),
        Op::Exp(a) => accumulate(adj, a, g.component_mul(out)),
        Op::Log(a) => accumulate(adj, a, g.component_div(val(a))),
        Op::Sqrt(a) => accumulate(adj, a, g.zip_map(out, |g, y| 0.5 * g / y)),
        Op::Recip(a) => accumulate(adj, a, g.zip_map(out, |g, y| -g * y * y)),
        Op::PowAbs(a, p) => {
            accumulate(
                adj,
                a,
                g.zip_map(val(a), |g, x| g * pow_abs_derivative(x, p)),
            );
        }
        Op::Relu(a) => accumulate(
            adj,
            a,
            g.zip_map(val(a), |g, x| if x > 0.0 { g } else { 0.0 }),
        ),
        Op::Tanh(a) => accumulate(adj, a, g.zip_map(out, |g, y| g * (1.0 - y * y))),
        Op::Sigmoid(a) => accumulate(adj, a, g.zip_map(out, |g, y| g * y * (1.0 - y))),
        Op::ClampMax(a, c) => {
            accumulate(
                adj,
                a,
                g.zip_map(val(a), |g, x| if x < c { g } else { 0.0 }),
            );
        }
        Op::ClampMin(a, c) => {
            accumulate(
                adj,
                a,
                g.zip_map(val(a), |g, x| if x > c { g } else { 0.0 }),
            );
        }
        Op::AddCol(a, v) => {
            accumulate(adj, v, Matrix::from_fn(g.nrows(), 1, |i, _| g.row(i).sum()));
            accumulate(adj, a, g.clone());
        }
        Op::AddRow(a, v) => {
            accumulate(
                adj,
                v,
                Matrix::from_fn(1, g.ncols(), |_, j| g.column(j).sum()),
            );
            accumulate(adj, a, g.clone());
        }
        Op::MulCol(a, v) => {
            let (av, vv) = (val(a), val(v));
            let gv = Matrix::from_fn(g.nrows(), 1, |i, _| {
                (0..g.ncols()).map(|j| g[(i, j)] * av[(i, j)]).sum()
            });
            let ga = Matrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * vv[(i, 0)]);
            accumulate(adj, v, gv);
            accumulate(adj, a, ga);
        }
        Op::MulRow(a, v) => {
            let (av, vv) = (val(a), val(v));
            let gv = Matrix::from_fn(1, g.ncols(), |_, j| {
                (0..g.nrows()).map(|i| g[(i, j)] * av[(i, j)]).sum()
            });
            let ga = Matrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * vv[(0, j)]);
            accumulate(adj, v, gv);
            accumulate(adj, a, ga);
        }
        Op::MulScalar(a, s) => {
            let gs = g.component_mul(val(a)).sum();
            accumulate(adj, s, Matrix::from_element(1, 1, gs));
            accumulate(adj, a, g * val(s)[(0, 0)]);
        }
        Op::SumAll(a) => {
            let (m, n) = val(a).shape();
            accumulate(adj, a, Matrix::from_element(m, n, g[(0, 0)]));
        }
        Op::RowSums(a) => {
            let (m, n) = val(a).shape();
            accumulate(adj, a, Matrix::from_fn(m, n, |i, _| g[(i, 0)]));
        }
        Op::ColSums(a) => {
            let (m, n) = val(a).shape();
            accumulate(adj, a, Matrix::from_fn(m, n, |_, j| g[(0, j)]));
        }
        Op::RowLse(a) => {
            let x = val(a);
            let ga = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                g[(i, 0)] * (x[(i, j)] - out[(i, 0)]).exp()
            });
            accumulate(adj, a, ga);
        }
        Op::ColLse(a) => {
            let x = val(a);
            let ga = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                g[(0, j)] * (x[(i, j)] - out[(0, j)]).exp()
            });
            accumulate(adj, a, ga);
        }
        Op::PairwiseCost(x, y, p) => {
            let (xv, yv) = (val(x), val(y));
            let (m, n, d) = (xv.nrows(), yv.nrows(), xv.ncols());
            let mut gx = Matrix::zeros(m, d);
            let mut gy = Matrix::zeros(n, d);
            for i in 0..m {
                for j in 0..n {
                    let gij = g[(i, j)];
                    if gij == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        let t = gij * pow_abs_derivative(xv[(i, k)] - yv[(j, k)], p);
                        gx[(i, k)] += t;
                        gy[(j, k)] -= t;
                    }
                }
            }
            accumulate(adj, x, gx);
            accumulate(adj, y, gy);
        }
        Op::RowL2Normalize(a) => {
            let x = val(a);
            let mut ga = Matrix::zeros(x.nrows(), x.ncols());
            for i in 0..x.nrows() {
                let row = x.row(i);
                let n = row.norm();
                let s = n.max(NORMALIZE_GUARD);
                let xg = row.dot(&g.row(i));
                for k in 0..x.ncols() {
                    let mut v = g[(i, k)] / s;
                    if n > NORMALIZE_GUARD {
                        v -= row[k] * xg / (n * n * n);
                    }
                    ga[(i, k)] = v;
                }
            }
            accumulate(adj, a, ga);
        }
        Op::RowSoftmax(a) => {
            let mut ga = Matrix::zeros(out.nrows(), out.ncols());
            for i in 0..out.nrows() {
                let gy = g.row(i).dot(&out.row(i));
                for k in 0..out.ncols() {
                    ga[(i, k)] = out[(i, k)] * (g[(i, k)] - gy);
                }
            }
            accumulate(adj, a, ga);
        }
        Op::Sqrtm(a) => {
            let (v, roots) = symmetric_eigen(val(a));
            let gs = (g + g.transpose()) * 0.5;
            let mut b = v.transpose() * gs * &v;
            let d = roots.len();
            for i in 0..d {
                for j in 0..d {
                    let den = roots[i] + roots[j];
                    b[(i, j)] = if den > 1e-12 { b[(i, j)] / den } else { 0.0 };
                }
            }
            accumulate(adj, a, &v * b * v.transpose());
        }
        Op::Trace(a) => {
            let d = val(a).nrows();
            accumulate(adj, a, Matrix::identity(d, d) * g[(0, 0)]);
        }
    }
}

#[inline]
fn pow_abs_derivative(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        2.0 * t
    } else if p == 1.0 {
        if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        p * t.abs().powf(p - 1.0) * t.signum()
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adj: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of `v`; zeros when the output does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Matrix {
        match self.adj.get(v.id).and_then(|a| a.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Matrix::zeros(r, c)
            }
        }
    }
}

impl<'t> Var<'t> {
    fn unary(self, op: Op) -> Var<'t> {
        let id = self.tape.push(op);
        self.tape.wrap(id)
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Matrix {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// The single entry of a `1×1` node.
    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        assert_eq!(v.shape(), (1, 1), "item() on a non-scalar node");
        v[(0, 0)]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.id))
    }
    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c))
    }
    pub fn offset(self, c: f64) -> Var<'t> {
        self.unary(Op::Offset(self.id, c))
    }
    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.unary(Op::MatMul(self.id, other.id))
    }
    pub fn t(self) -> Var<'t> {
        self.unary(Op::Transpose(self.id))
    }
    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id))
    }
    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Log(self.id))
    }
    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id))
    }
    pub fn recip(self) -> Var<'t> {
        self.unary(Op::Recip(self.id))
    }
    /// Elementwise `|x|^p`.
    pub fn pow_abs(self, p: f64) -> Var<'t> {
        self.unary(Op::PowAbs(self.id, p))
    }
    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id))
    }
    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id))
    }
    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id))
    }
    /// Elementwise `min(x, c)`.
    pub fn clamp_max(self, c: f64) -> Var<'t> {
        self.unary(Op::ClampMax(self.id, c))
    }
    /// Elementwise `max(x, c)`.
    pub fn clamp_min(self, c: f64) -> Var<'t> {
        self.unary(Op::ClampMin(self.id, c))
    }
    pub fn add_col(self, col: Var<'t>) -> Var<'t> {
        self.unary(Op::AddCol(self.id, col.id))
    }
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        self.unary(Op::AddRow(self.id, row.id))
    }
    /// Scales row `i` by `col[i]`, i.e. `Diag(col) · self`.
    pub fn mul_col(self, col: Var<'t>) -> Var<'t> {
        self.unary(Op::MulCol(self.id, col.id))
    }
    /// Scales column `j` by `row[j]`, i.e. `self · Diag(row)`.
    pub fn mul_row(self, row: Var<'t>) -> Var<'t> {
        self.unary(Op::MulRow(self.id, row.id))
    }
    pub fn mul_scalar(self, s: Var<'t>) -> Var<'t> {
        self.unary(Op::MulScalar(self.id, s.id))
    }
    pub fn sum(self) -> Var<'t> {
        self.unary(Op::SumAll(self.id))
    }
    /// `M×N → M×1`
    pub fn row_sums(self) -> Var<'t> {
        self.unary(Op::RowSums(self.id))
    }
    /// `M×N → 1×N`
    pub fn col_sums(self) -> Var<'t> {
        self.unary(Op::ColSums(self.id))
    }
    /// Log-sum-exp of each row, `M×N → M×1`.
    pub fn row_logsumexp(self) -> Var<'t> {
        self.unary(Op::RowLse(self.id))
    }
    /// Log-sum-exp of each column, `M×N → 1×N`.
    pub fn col_logsumexp(self) -> Var<'t> {
        self.unary(Op::ColLse(self.id))
    }
    pub fn row_l2_normalize(self) -> Var<'t> {
        self.unary(Op::RowL2Normalize(self.id))
    }
    pub fn row_softmax(self) -> Var<'t> {
        self.unary(Op::RowSoftmax(self.id))
    }
    /// Principal square root of a symmetric PSD matrix.
    pub fn sqrtm(self) -> Var<'t> {
        self.unary(Op::Sqrtm(self.id))
    }
    pub fn trace(self) -> Var<'t> {
        self.unary(Op::Trace(self.id))
    }
}

/// `C_ij = ‖x_i − y_j‖_p^p` for row-stacked point sets.
pub fn pairwise_cost<'t>(x: Var<'t>, y: Var<'t>, p: f64) -> Var<'t> {
    x.unary(Op::PairwiseCost(x.id, y.id, p))
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl<'t> std::ops::$trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.unary(Op::$variant(self.id, rhs.id))
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        Var::neg(self)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.scale(c)
    }
}

/// Loss value and reverse-mode gradient of `f` at `params`.
///
/// `f` records its computation on the supplied tape; one leaf per parameter
/// is created up front, in order.
pub fn grad<F>(params: &[Matrix], f: F) -> Result<(f64, Vec<Matrix>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&tape, &vars)?;
    tape.check_finite()?;
    let value = loss.item();
    let g = tape.backward(loss);
    let grads: Vec<Matrix> = vars.iter().map(|v| g.wrt(*v)).collect();
    if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(OtError::NumericInstability(format!(
            "gradient of parameter {i} is not finite"
        )));
    }
    Ok((value, grads))
}

/// Forward value only.
pub fn evaluate<F>(params: &[Matrix], f: F) -> Result<f64>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&tape, &vars)?;
    tape.check_finite()?;
    Ok(loss.item())
}

/// Analytic gradient against central differences at every coordinate.
#[derive(Clone, Debug)]
pub struct FdReport {
    /// `max |analytic − numeric| / max(|numeric|, 1e-8)` over all coordinates.
    pub max_rel_error: f64,
    pub analytic: Vec<Matrix>,
    pub numeric: Vec<Matrix>,
}

/// Compares [`grad`] against `(f(x+h e_i) − f(x−h e_i)) / 2h`.
pub fn finite_difference_check<F>(params: &[Matrix], f: F, step: f64) -> Result<FdReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(step > 0.0) {
        return Err(OtError::invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (_, analytic) = grad(params, &f)?;
    let mut numeric: Vec<Matrix> = params
        .iter()
        .map(|p| Matrix::zeros(p.nrows(), p.ncols()))
        .collect();
    let mut work: Vec<Matrix> = params.to_vec();
    let mut max_rel_error: f64 = 0.0;
    for pi in 0..params.len() {
        for k in 0..params[pi].len() {
            let orig = params[pi][k];
            work[pi][k] = orig + step;
            let up = evaluate(&work, &f)?;
            work[pi][k] = orig - step;
            let down = evaluate(&work, &f)?;
            work[pi][k] = orig;
            let num = (up - down) / (2.0 * step);
            numeric[pi][k] = num;
            let err = (analytic[pi][k] - num).abs() / num.abs().max(1e-8);
            max_rel_error = max_rel_error.max(err);
        }
    }
    Ok(FdReport {
        max_rel_error,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = vec![Matrix::from_element(2, 3, 1.5)];
        let (v, g) = grad(&p, |t, _| Ok(t.scalar(4.0))).unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(g[0], Matrix::zeros(2, 3));
    }

    #[test]
    fn squared_norm_gradient_is_exact() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let (v, g) = grad(std::slice::from_ref(&x), |_, p| Ok((p[0] * p[0]).sum())).unwrap();
        assert_eq!(v, x.norm_squared());
        assert_eq!(g[0], &x * 2.0);
    }

    #[test]
    fn quadratic_fd_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = rand_mat(&mut rng, 3, 3);
        let x = rand_mat(&mut rng, 3, 2);
        for h in [1e-3, 1e-4] {
            let rep = finite_difference_check(
                std::slice::from_ref(&x),
                |t, p| {
                    let a = t.leaf(a.clone());
                    let y = a.matmul(p[0]);
                    Ok((y * p[0]).sum() + p[0].sum().scale(3.0))
                },
                h,
            )
            .unwrap();
            assert!(rep.max_rel_error <= 1e-7, "h={h}: {}", rep.max_rel_error);
        }
    }

    fn check_unary(f: impl for<'t> Fn(Var<'t>) -> Var<'t>, x: Matrix) {
        let rep = finite_difference_check(
            std::slice::from_ref(&x),
            |t, p| {
                let y = f(p[0]);
                let (r, c) = y.shape();
                let w = t.leaf(Matrix::from_fn(r, c, |i, j| {
                    1.0 + 0.3 * i as f64 - 0.7 * j as f64
                }));
                Ok((y * w).sum())
            },
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_error <= 1e-6, "{}", rep.max_rel_error);
    }

    #[test]
    fn primitive_adjoints_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_mat(&mut rng, 3, 4);
        let pos = x.map(|v| v.abs() + 0.5);
        check_unary(|v| v.exp(), x.clone());
        check_unary(|v| v.ln(), pos.clone());
        check_unary(|v| v.sqrt(), pos.clone());
        check_unary(|v| v.recip(), pos.clone());
        check_unary(|v| v.pow_abs(2.0), x.clone());
        check_unary(|v| v.pow_abs(3.5), x.clone());
        check_unary(|v| v.tanh(), x.clone());
        check_unary(|v| v.sigmoid(), x.clone());
        check_unary(|v| v.relu(), x.clone());
        check_unary(|v| v.t(), x.clone());
        check_unary(|v| v.row_logsumexp().col_sums(), x.clone());
        check_unary(|v| v.col_logsumexp().row_sums(), x.clone());
        check_unary(|v| v.row_l2_normalize(), x.clone());
        check_unary(|v| v.row_softmax(), x.clone());
        check_unary(|v| v.row_sums(), x.clone());
        check_unary(|v| v.col_sums(), x.clone());
        check_unary(|v| v.scale(-2.5).offset(1.0), x.clone());
        check_unary(|v| v.clamp_max(0.2), x.clone());
        check_unary(|v| v.clamp_min(-0.1), x.clone());
        let sq = rand_mat(&mut rng, 3, 3);
        let spd = &sq * sq.transpose() + Matrix::identity(3, 3) * 0.3;
        check_unary(|v| v.sqrtm(), spd.clone());
        check_unary(|v| v.trace(), spd);
    }

    #[test]
    fn broadcast_and_binary_adjoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_mat(&mut rng, 3, 4);
        let b = rand_mat(&mut rng, 3, 4).map(|v| v.abs() + 0.5);
        let col = rand_mat(&mut rng, 3, 1);
        let row = rand_mat(&mut rng, 1, 4);
        let s = rand_mat(&mut rng, 1, 1);
        let m = rand_mat(&mut rng, 4, 2);
        let y = rand_mat(&mut rng, 5, 4);
        let rep = finite_difference_check(
            &[a, b, col, row, s, m, y],
            |_, p| {
                let (a, b, col, row, s, m, y) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
                let u = (a + b) * (a - b) / b;
                let u = u
                    .add_col(col)
                    .add_row(row)
                    .mul_col(col)
                    .mul_row(row)
                    .mul_scalar(s);
                let w = u.matmul(m).pow_abs(2.0).sum();
                let c = pairwise_cost(a, y, 2.0).sum() + pairwise_cost(a, y, 1.5).sum();
                Ok(w + c + (-a).sum())
            },
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_error <= 1e-6, "{}", rep.max_rel_error);
    }

    #[test]
    fn linearity_of_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_mat(&mut rng, 4, 3);
        fn f(v: Var<'_>) -> Var<'_> {
            v.exp().row_logsumexp().sum()
        }
        fn g(v: Var<'_>) -> Var<'_> {
            v.tanh().pow_abs(2.0).sum()
        }
        let (alpha, beta) = (0.7, -1.3);
        let (_, gf) = grad(std::slice::from_ref(&x), |_, p| Ok(f(p[0]))).unwrap();
        let (_, gg) = grad(std::slice::from_ref(&x), |_, p| Ok(g(p[0]))).unwrap();
        let (_, gc) = grad(std::slice::from_ref(&x), |_, p| {
            Ok(f(p[0]).scale(alpha) + g(p[0]).scale(beta))
        })
        .unwrap();
        let expect = &gf[0] * alpha + &gg[0] * beta;
        assert!((&gc[0] - expect).amax() <= 1e-10);
    }

    #[test]
    fn replay_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tape = Tape::new();
        let x = tape.leaf(rand_mat(&mut rng, 5, 3));
        let y = tape.leaf(rand_mat(&mut rng, 4, 3));
        let c = pairwise_cost(x, y, 2.0).scale(-2.0);
        let _ = c.row_logsumexp().sum() + x.row_softmax().sum();
        let recorded = tape.values();
        let replayed = tape.replay();
        assert_eq!(recorded, replayed);
    }

    #[test]
    fn non_finite_node_is_reported() {
        let err = grad(&[Matrix::from_element(1, 2, -1.0)], |_, p| {
            Ok(p[0].ln().sum())
        })
        .unwrap_err();
        match err {
            OtError::NonFinite { node, op } => {
                assert_eq!(node, 1);
                assert_eq!(op, "log");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn softmax_head_is_stable_for_large_inputs() {
        let tape = Tape::new();
        let x = tape.leaf(Matrix::from_row_slice(
            2,
            3,
            &[1e4, -1e4, 0.0, 800.0, 801.0, 799.0],
        ));
        let y = x.row_softmax().value();
        for i in 0..2 {
            assert!((y.row(i).sum() - 1.0).abs() <= 1e-12);
            assert!(y.row(i).iter().all(|v| *v >= 0.0));
        }
        tape.check_finite().unwrap();
    }

    #[test]
    fn fd_rejects_bad_step() {
        assert!(
            finite_difference_check(&[Matrix::zeros(1, 1)], |t, _| Ok(t.scalar(0.0)), 0.0).is_err()
        );
    }
}
