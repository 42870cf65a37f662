//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse from a 1x1 root and returns the adjoint of every node.
//! Elementwise binary operations broadcast along any axis of extent 1, so a
//! 1x1 node acts as a scalar and a 1xm node as a row (bias) vector.
//!
//! [`Jet`] bundles a value with its first derivatives and diagonal second
//! derivatives with respect to the input coordinates. All three are ordinary
//! tape nodes, so PDE residuals built from them (u, ∂u, ∂²u) are themselves
//! differentiable with respect to every trainable parameter. Mixed partials
//! are not tracked.
//!
//! The tape is rebuilt for every training step and is single threaded.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::special;
use crate::tensor::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise functions with known derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Neg,
    Tanh,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Square,
    Softplus,
    /// Subgradient 0 at the origin.
    Abs,
    LnGamma,
}

macro_rules! for_each_unary {
    ($f:expr, $body:ident) => {
        match $f {
            Unary::Neg => $body!(Unary::Neg),
            Unary::Tanh => $body!(Unary::Tanh),
            Unary::Sin => $body!(Unary::Sin),
            Unary::Cos => $body!(Unary::Cos),
            Unary::Exp => $body!(Unary::Exp),
            Unary::Ln => $body!(Unary::Ln),
            Unary::Sqrt => $body!(Unary::Sqrt),
            Unary::Square => $body!(Unary::Square),
            Unary::Softplus => $body!(Unary::Softplus),
            Unary::Abs => $body!(Unary::Abs),
            Unary::LnGamma => $body!(Unary::LnGamma),
        }
    };
}

impl Unary {
    #[inline(always)]
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Tanh => special::tanh(x),
            Unary::Sin => libm::sin(x),
            Unary::Cos => libm::cos(x),
            Unary::Exp => libm::exp(x),
            Unary::Ln => libm::log(x),
            Unary::Sqrt => libm::sqrt(x),
            Unary::Square => x * x,
            Unary::Softplus => special::softplus(x),
            Unary::Abs => libm::fabs(x),
            Unary::LnGamma => special::ln_gamma(x),
        }
    }

    /// dy/dx given input `x` and output `y`.
    #[inline(always)]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Tanh => 1.0 - y * y,
            Unary::Sin => libm::cos(x),
            Unary::Cos => -libm::sin(x),
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Softplus => special::sigmoid(x),
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::LnGamma => special::digamma(x),
        }
    }

    // The match is hoisted out of the element loops so each arm inlines.
    fn apply_all(self, xs: &[f64]) -> Vec<f64> {
        macro_rules! body {
            ($k:expr) => {
                xs.iter().map(|&x| $k.apply(x)).collect()
            };
        }
        for_each_unary!(self, body)
    }

    fn pullback(self, g: &[f64], xs: &[f64], ys: &[f64]) -> Vec<f64> {
        macro_rules! body {
            ($k:expr) => {
                g.iter()
                    .zip(xs.iter().zip(ys))
                    .map(|(&g, (&x, &y))| if g == 0.0 { 0.0 } else { g * $k.derivative(x, y) })
                    .collect()
            };
        }
        for_each_unary!(self, body)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Unary(Unary, Var),
    MatMul(Var, Var),
    Column(Var, usize),
    Sum(Var),
    Mean(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A single forward pass worth of recorded operations.
#[derive(Default, Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(usize, Var)>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

fn zip_broadcast(a: &Matrix, b: &Matrix, shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (rows, cols) = shape;
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let mut data = Vec::with_capacity(rows * cols);
    if a.shape() == b.shape() {
        data.extend(sa.iter().zip(sb).map(|(&x, &y)| f(x, y)));
    } else if b.len() == 1 && a.shape() == shape {
        let y = sb[0];
        data.extend(sa.iter().map(|&x| f(x, y)));
    } else if a.len() == 1 && b.shape() == shape {
        let x = sa[0];
        data.extend(sb.iter().map(|&y| f(x, y)));
    } else {
        for r in 0..rows {
            let ra = if a.rows() == 1 { 0 } else { r };
            let rb = if b.rows() == 1 { 0 } else { r };
            let row_a = &sa[ra * a.cols()..(ra + 1) * a.cols()];
            let row_b = &sb[rb * b.cols()..(rb + 1) * b.cols()];
            match (row_a.len() == cols, row_b.len() == cols) {
                (true, true) => data.extend(row_a.iter().zip(row_b).map(|(&x, &y)| f(x, y))),
                (true, false) => data.extend(row_a.iter().map(|&x| f(x, row_b[0]))),
                (false, true) => data.extend(row_b.iter().map(|&y| f(row_a[0], y))),
                (false, false) => data.extend(core::iter::repeat(f(row_a[0], row_b[0])).take(cols)),
            }
        }
    }
    Matrix::from_vec(rows, cols, data).expect("broadcast shape")
}

/// Sum `grad` down to `shape` over broadcast axes.
fn reduce_to(grad: Matrix, shape: (usize, usize)) -> Matrix {
    if grad.shape() == shape {
        return grad;
    }
    let (rows, cols) = grad.shape();
    let src = grad.as_slice();
    let mut out = Matrix::zeros(shape.0, shape.1);
    let dst = out.as_mut_slice();
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        let ro = if shape.0 == 1 { 0 } else { r };
        if shape.1 == 1 {
            dst[ro] += row.iter().sum::<f64>();
        } else {
            for (d, &v) in dst[ro * cols..(ro + 1) * cols].iter_mut().zip(row) {
                *d += v;
            }
        }
    }
    out
}

fn accumulate(slot: &mut Option<Matrix>, grad: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&grad),
        None => *slot = Some(grad),
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// A node that gradients do not flow into.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Matrix::scalar(value))
    }

    /// A trainable leaf; its adjoint is reported under `id` by [`Gradients::param`].
    pub fn param(&mut self, id: usize, value: Matrix) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.params.push((id, v));
        v
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let shape = broadcast_shape(sa, sb).ok_or_else(|| {
            Error::structural(format!("cannot broadcast {sa:?} with {sb:?} in {kind:?}"))
        })?;
        let value = zip_broadcast(self.value(a), self.value(b), shape, |x, y| kind.apply(x, y));
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.requires(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn shift(&mut self, a: Var, offset: f64) -> Var {
        let value = self.value(a).map(|x| x + offset);
        let rg = self.requires(a);
        self.push(value, Op::Shift(a), rg)
    }

    pub fn unary(&mut self, f: Unary, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::from_vec(m.rows(), m.cols(), f.apply_all(m.as_slice())).expect("same shape");
        let rg = self.requires(a);
        self.push(value, Op::Unary(f, a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(Unary::Sin, a)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(Unary::Cos, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Ln, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }

    pub fn ln_gamma(&mut self, a: Var) -> Var {
        self.unary(Unary::LnGamma, a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Column `col` of `a` as an n x 1 node.
    pub fn column(&mut self, a: Var, col: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if col >= cols {
            return Err(Error::structural(format!("column {col} out of range for {rows}x{cols}")));
        }
        let value = Matrix::column(&self.value(a).col_values(col));
        let rg = self.requires(a);
        Ok(self.push(value, Op::Column(a, col), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.requires(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Error::structural("mean of an empty node"));
        }
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        let rg = self.requires(a);
        Ok(self.push(value, Op::Mean(a), rg))
    }

    /// Fails with a numerical error naming `what` if `v` holds NaN or inf.
    pub fn ensure_finite(&self, v: Var, what: &str) -> Result<()> {
        if self.value(v).all_finite() {
            Ok(())
        } else {
            Err(Error::numerical(format!("non-finite values in {what}")))
        }
    }

    /// Reverse sweep from a 1x1 `root`.
    ///
    /// The tape itself is not modified, so repeated calls give identical results.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::structural("root does not belong to this tape"));
        }
        if !self.value(root).is_scalar() {
            let (r, c) = self.shape(root);
            return Err(Error::structural(format!("backward root must be 1x1, got {r}x{c}")));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::Binary(kind, a, b) => {
                    let va = self.value(a);
                    let vb = self.value(b);
                    let out_shape = g.shape();
                    let need_a = self.requires(a);
                    if self.requires(b) {
                        let gb = match kind {
                            Binary::Add => g.clone(),
                            Binary::Sub => g.map(|g| -g),
                            Binary::Mul => zip_broadcast(&g, va, out_shape, |g, x| g * x),
                            Binary::Div => {
                                let q = zip_broadcast(&g, vb, out_shape, |g, y| g / y);
                                let q = zip_broadcast(&q, vb, out_shape, |q, y| q / y);
                                zip_broadcast(&q, va, out_shape, |q, x| -q * x)
                            }
                        };
                        accumulate(&mut adj[b.0], reduce_to(gb, vb.shape()));
                    }
                    if need_a {
                        let ga = match kind {
                            Binary::Add | Binary::Sub => g,
                            Binary::Mul => zip_broadcast(&g, vb, out_shape, |g, y| g * y),
                            Binary::Div => zip_broadcast(&g, vb, out_shape, |g, y| g / y),
                        };
                        accumulate(&mut adj[a.0], reduce_to(ga, va.shape()));
                    }
                }
                Op::Scale(a, factor) => accumulate(&mut adj[a.0], g.map(|g| g * factor)),
                Op::Shift(a) => accumulate(&mut adj[a.0], g),
                Op::Unary(f, a) => {
                    let x = self.value(a).as_slice();
                    let y = node.value.as_slice();
                    let data = f.pullback(g.as_slice(), x, y);
                    let (r, c) = g.shape();
                    accumulate(&mut adj[a.0], Matrix::from_vec(r, c, data)?);
                }
                Op::MatMul(a, b) => {
                    let va = self.value(a);
                    let vb = self.value(b);
                    if self.requires(a) {
                        let mut ga = Matrix::zeros(va.rows(), va.cols());
                        Matrix::gemm_into(&g, false, vb, true, 0.0, &mut ga);
                        accumulate(&mut adj[a.0], ga);
                    }
                    if self.requires(b) {
                        let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                        Matrix::gemm_into(va, true, &g, false, 0.0, &mut gb);
                        accumulate(&mut adj[b.0], gb);
                    }
                }
                Op::Column(a, col) => {
                    let (rows, cols) = self.shape(a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.set(r, col, g.get(r, 0));
                    }
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(a);
                    accumulate(&mut adj[a.0], Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(a);
                    let n = (r * c) as f64;
                    accumulate(&mut adj[a.0], Matrix::filled(r, c, g.item() / n));
                }
            }
        }
        Ok(Gradients { adjoints: adj, params: self.params.clone() })
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    /// Adjoint of a leaf that requires gradients; `None` if no path reached it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(|a| a.as_ref())
    }

    /// Adjoint of the parameter registered under `id`, summed if it was
    /// bound more than once.
    pub fn param(&self, id: usize) -> Option<Matrix> {
        let mut total: Option<Matrix> = None;
        for &(pid, v) in &self.params {
            if pid == id {
                if let Some(g) = self.wrt(v) {
                    accumulate(&mut total, g.clone());
                }
            }
        }
        total
    }
}

/// A value with its gradient and diagonal Hessian w.r.t. the input coordinates.
///
/// `grad[i]` and `diag2[i]` have the same shape as `value`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Jet {
    pub value: Var,
    pub grad: Vec<Var>,
    pub diag2: Vec<Var>,
}

/// Elementwise operations that can be pushed through [`Jet`]s.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Mul,
    Tanh,
    Sin,
    Square,
    /// `x · weight + bias`, i.e. a dense layer applied row-wise.
    Affine { weight: Var, bias: Var },
}

impl JetOp {
    /// Looks an elementwise op up by name; `affine` needs its weights and is
    /// not constructible this way.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "add" => Ok(JetOp::Add),
            "mul" => Ok(JetOp::Mul),
            "tanh" => Ok(JetOp::Tanh),
            "sin" => Ok(JetOp::Sin),
            "square" => Ok(JetOp::Square),
            other => Err(Error::structural(format!("unsupported jet op `{other}`"))),
        }
    }

    fn arity(self) -> usize {
        match self {
            JetOp::Add | JetOp::Mul => 2,
            _ => 1,
        }
    }
}

impl Jet {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Jet of the n x d input matrix `x`: `grad[i]` is the indicator of
    /// column i and every `diag2` entry is zero.
    pub fn seed_inputs(tape: &mut Tape, x: &Matrix) -> Jet {
        let (n, d) = x.shape();
        let value = tape.constant(x.clone());
        let mut grad = Vec::with_capacity(d);
        let mut diag2 = Vec::with_capacity(d);
        for i in 0..d {
            let mut unit = Matrix::zeros(n, d);
            for r in 0..n {
                unit.set(r, i, 1.0);
            }
            grad.push(tape.constant(unit));
            diag2.push(tape.constant(Matrix::zeros(n, d)));
        }
        Jet { value, grad, diag2 }
    }

    /// Jet of coordinate `index` out of `dim`, evaluated at the n points in `values`.
    pub fn seed_coordinate(tape: &mut Tape, values: &[f64], index: usize, dim: usize) -> Result<Jet> {
        if index >= dim {
            return Err(Error::structural(format!("coordinate {index} out of range for dimension {dim}")));
        }
        let n = values.len();
        let value = tape.constant(Matrix::column(values));
        let grad = (0..dim)
            .map(|i| tape.constant(Matrix::filled(n, 1, if i == index { 1.0 } else { 0.0 })))
            .collect();
        let diag2 = (0..dim).map(|_| tape.constant(Matrix::zeros(n, 1))).collect();
        Ok(Jet { value, grad, diag2 })
    }

    /// Jet of a quantity that does not depend on the coordinates.
    pub fn constant_like(tape: &mut Tape, value: Var, dim: usize) -> Jet {
        let (r, c) = tape.shape(value);
        let grad = (0..dim).map(|_| tape.constant(Matrix::zeros(r, c))).collect();
        let diag2 = (0..dim).map(|_| tape.constant(Matrix::zeros(r, c))).collect();
        Jet { value, grad, diag2 }
    }

    pub fn add(tape: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
        check_dims(a, b)?;
        let value = tape.add(a.value, b.value)?;
        let mut grad = Vec::with_capacity(a.dim());
        let mut diag2 = Vec::with_capacity(a.dim());
        for i in 0..a.dim() {
            grad.push(tape.add(a.grad[i], b.grad[i])?);
            diag2.push(tape.add(a.diag2[i], b.diag2[i])?);
        }
        Ok(Jet { value, grad, diag2 })
    }

    pub fn mul(tape: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
        check_dims(a, b)?;
        let value = tape.mul(a.value, b.value)?;
        let mut grad = Vec::with_capacity(a.dim());
        let mut diag2 = Vec::with_capacity(a.dim());
        for i in 0..a.dim() {
            let agb = tape.mul(a.value, b.grad[i])?;
            let bga = tape.mul(b.value, a.grad[i])?;
            grad.push(tape.add(agb, bga)?);
            // (ab)'' = a b'' + b a'' + 2 a' b'
            let adb = tape.mul(a.value, b.diag2[i])?;
            let bda = tape.mul(b.value, a.diag2[i])?;
            let cross = tape.mul(a.grad[i], b.grad[i])?;
            let cross = tape.scale(cross, 2.0);
            let s = tape.add(adb, bda)?;
            diag2.push(tape.add(s, cross)?);
        }
        Ok(Jet { value, grad, diag2 })
    }

    /// Applies a scalar function `f` with `f'(v)` and `f''(v)` supplied as nodes.
    fn chain(tape: &mut Tape, a: &Jet, value: Var, d1: Var, d2: Var) -> Result<Jet> {
        let mut grad = Vec::with_capacity(a.dim());
        let mut diag2 = Vec::with_capacity(a.dim());
        for i in 0..a.dim() {
            let g = a.grad[i];
            grad.push(tape.mul(d1, g)?);
            // f(a)'' = f''(a) a'^2 + f'(a) a''
            let g2 = tape.square(g);
            let curv = tape.mul(d2, g2)?;
            let lin = tape.mul(d1, a.diag2[i])?;
            diag2.push(tape.add(curv, lin)?);
        }
        Ok(Jet { value, grad, diag2 })
    }

    pub fn tanh(tape: &mut Tape, a: &Jet) -> Result<Jet> {
        let s = tape.tanh(a.value);
        let s2 = tape.square(s);
        let neg = tape.neg(s2);
        let d1 = tape.shift(neg, 1.0);
        let s_d1 = tape.mul(s, d1)?;
        let d2 = tape.scale(s_d1, -2.0);
        Self::chain(tape, a, s, d1, d2)
    }

    pub fn sin(tape: &mut Tape, a: &Jet) -> Result<Jet> {
        let s = tape.sin(a.value);
        let d1 = tape.cos(a.value);
        let d2 = tape.neg(s);
        Self::chain(tape, a, s, d1, d2)
    }

    pub fn square(tape: &mut Tape, a: &Jet) -> Result<Jet> {
        let value = tape.square(a.value);
        let d1 = tape.scale(a.value, 2.0);
        let d2 = tape.constant(Matrix::scalar(2.0));
        Self::chain(tape, a, value, d1, d2)
    }

    /// Row-wise dense layer; derivative channels are mapped by `weight` only.
    pub fn affine(tape: &mut Tape, a: &Jet, weight: Var, bias: Var) -> Result<Jet> {
        let z = tape.matmul(a.value, weight)?;
        let value = tape.add(z, bias)?;
        let mut grad = Vec::with_capacity(a.dim());
        let mut diag2 = Vec::with_capacity(a.dim());
        for i in 0..a.dim() {
            grad.push(tape.matmul(a.grad[i], weight)?);
            diag2.push(tape.matmul(a.diag2[i], weight)?);
        }
        Ok(Jet { value, grad, diag2 })
    }

    pub fn scale(tape: &mut Tape, a: &Jet, factor: f64) -> Jet {
        Jet {
            value: tape.scale(a.value, factor),
            grad: a.grad.iter().map(|&g| tape.scale(g, factor)).collect(),
            diag2: a.diag2.iter().map(|&d| tape.scale(d, factor)).collect(),
        }
    }

    /// Column `col` of every channel.
    pub fn column(tape: &mut Tape, a: &Jet, col: usize) -> Result<Jet> {
        Ok(Jet {
            value: tape.column(a.value, col)?,
            grad: a.grad.iter().map(|&g| tape.column(g, col)).collect::<Result<_>>()?,
            diag2: a.diag2.iter().map(|&d| tape.column(d, col)).collect::<Result<_>>()?,
        })
    }

    /// Sum of the diagonal second derivatives.
    pub fn laplacian(&self, tape: &mut Tape) -> Result<Var> {
        let mut iter = self.diag2.iter();
        let first = *iter.next().ok_or_else(|| Error::structural("laplacian of a 0-dimensional jet"))?;
        iter.try_fold(first, |acc, &d| tape.add(acc, d))
    }
}

fn check_dims(a: &Jet, b: &Jet) -> Result<()> {
    if a.dim() != b.dim() || a.diag2.len() != b.diag2.len() {
        return Err(Error::structural(format!(
            "jet dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Applies `op` to `inputs`, propagating value, gradient and diagonal second
/// derivative by the chain rule.
pub fn jet_apply(tape: &mut Tape, op: JetOp, inputs: &[Jet]) -> Result<Jet> {
    if inputs.len() != op.arity() {
        return Err(Error::structural(format!(
            "{op:?} takes {} jet(s), got {}",
            op.arity(),
            inputs.len()
        )));
    }
    match op {
        JetOp::Add => Jet::add(tape, &inputs[0], &inputs[1]),
        JetOp::Mul => Jet::mul(tape, &inputs[0], &inputs[1]),
        JetOp::Tanh => Jet::tanh(tape, &inputs[0]),
        JetOp::Sin => Jet::sin(tape, &inputs[0]),
        JetOp::Square => Jet::square(tape, &inputs[0]),
        JetOp::Affine { weight, bias } => Jet::affine(tape, &inputs[0], weight, bias),
    }
}
