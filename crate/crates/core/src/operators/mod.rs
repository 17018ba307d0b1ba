//! Linear operators, parametric operator families and their parameter
//! derivatives, plus the concrete forward models and regularizers.

pub mod ct;
pub mod motion;
pub mod pat;
pub mod reg;

mod csr;

pub use csr::{CsrBuilder, CsrMatrix};

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::linalg::{dot, norm2, DenseMatrix};

/// Matrix-free linear map with an adjoint.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`, overwriting `y`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    /// `x = Aᵀ y`, overwriting `x`.
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "apply: input length mismatch");
        let mut y = vec![0.0; self.rows()];
        self.apply_into(x, &mut y);
        y
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows(), "adjoint: input length mismatch");
        let mut x = vec![0.0; self.cols()];
        self.adjoint_into(y, &mut x);
        x
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        (**self).adjoint_into(y, x)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        (**self).adjoint_into(y, x)
    }
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }
    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.mul_vec(x));
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        x.copy_from_slice(&self.tr_mul_vec(y));
    }
}

/// Identity on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn rows(&self) -> usize {
        self.0
    }
    fn cols(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        x.copy_from_slice(y);
    }
}

/// `[A; B]`
#[derive(Debug, Clone)]
pub struct VStack<A, B> {
    pub top: A,
    pub bottom: B,
}

impl<A: LinearOperator, B: LinearOperator> VStack<A, B> {
    pub fn new(top: A, bottom: B) -> Result<Self> {
        if top.cols() != bottom.cols() {
            return dim_err("stacked operators must share the input dimension");
        }
        Ok(Self { top, bottom })
    }
}

impl<A: LinearOperator, B: LinearOperator> LinearOperator for VStack<A, B> {
    fn rows(&self) -> usize {
        self.top.rows() + self.bottom.rows()
    }
    fn cols(&self) -> usize {
        self.top.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (a, b) = y.split_at_mut(self.top.rows());
        self.top.apply_into(x, a);
        self.bottom.apply_into(x, b);
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let (a, b) = y.split_at(self.top.rows());
        self.top.adjoint_into(a, x);
        let mut tmp = vec![0.0; x.len()];
        self.bottom.adjoint_into(b, &mut tmp);
        for (xi, ti) in x.iter_mut().zip(&tmp) {
            *xi += ti;
        }
    }
}

/// `diag(w) A`
#[derive(Debug, Clone)]
pub struct RowScaled<A> {
    pub op: A,
    pub weights: Vec<f64>,
}

impl<A: LinearOperator> LinearOperator for RowScaled<A> {
    fn rows(&self) -> usize {
        self.op.rows()
    }
    fn cols(&self) -> usize {
        self.op.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_into(x, y);
        for (v, w) in y.iter_mut().zip(&self.weights) {
            *v *= w;
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let wy: Vec<f64> = y.iter().zip(&self.weights).map(|(a, b)| a * b).collect();
        self.op.adjoint_into(&wy, x);
    }
}

/// `c A`
#[derive(Debug, Clone)]
pub struct Scaled<A> {
    pub op: A,
    pub factor: f64,
}

impl<A: LinearOperator> LinearOperator for Scaled<A> {
    fn rows(&self) -> usize {
        self.op.rows()
    }
    fn cols(&self) -> usize {
        self.op.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_into(x, y);
        crate::linalg::scale(y, self.factor);
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        self.op.adjoint_into(y, x);
        crate::linalg::scale(x, self.factor);
    }
}

/// Family `p ↦ H(p)` of forward operators sharing one shape.
pub trait ParametricFamily {
    type Op: LinearOperator;
    fn n_params(&self) -> usize;
    fn build(&self, p: &[f64]) -> Result<Self::Op>;
}

/// Family whose measurements split into independent units (projection
/// angles, sensors) that occupy contiguous row ranges.
pub trait BlockedFamily: ParametricFamily + Sized {
    fn units(&self) -> usize;
    fn rows_per_unit(&self, unit: usize) -> usize;
    /// Sub-family over `units` (ascending, without duplicates), rows kept in
    /// unit order.
    fn restrict(&self, units: &[usize]) -> Result<Self>;

    /// Row offset of every unit plus the total row count.
    fn unit_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.units() + 1);
        let mut acc = 0;
        off.push(0);
        for u in 0..self.units() {
            acc += self.rows_per_unit(u);
            off.push(acc);
        }
        off
    }

    /// Measurement entries belonging to `units`, in unit order.
    fn gather(&self, b: &[f64], units: &[usize]) -> Vec<f64> {
        let off = self.unit_offsets();
        let mut out = Vec::new();
        for &u in units {
            out.extend_from_slice(&b[off[u]..off[u + 1]]);
        }
        out
    }
}

/// `p ↦ p₀ A`: a linear-in-parameter toy family.
#[derive(Debug, Clone)]
pub struct ScalingFamily<A> {
    pub base: A,
}

impl<A: LinearOperator + Clone> ParametricFamily for ScalingFamily<A> {
    type Op = Scaled<A>;
    fn n_params(&self) -> usize {
        1
    }
    fn build(&self, p: &[f64]) -> Result<Self::Op> {
        if p.len() != 1 {
            return dim_err("scaling family takes one parameter");
        }
        Ok(Scaled { op: self.base.clone(), factor: p[0] })
    }
}

/// Finite-difference step for parameter `p_i`.
pub fn derivative_step(p_i: f64) -> f64 {
    1e-4 * p_i.abs().max(1.0)
}

/// Central-difference approximation of `∂H/∂p_i` at `p`.
#[derive(Debug, Clone)]
pub struct ParamDerivative<O> {
    plus: O,
    minus: O,
    step: f64,
}

impl<O: LinearOperator> ParamDerivative<O> {
    pub fn new<F: ParametricFamily<Op = O>>(family: &F, p: &[f64], i: usize) -> Result<Self> {
        Self::with_step(family, p, i, derivative_step(p[i]))
    }

    pub fn with_step<F: ParametricFamily<Op = O>>(family: &F, p: &[f64], i: usize, h: f64) -> Result<Self> {
        if i >= p.len() {
            return dim_err("parameter index out of range");
        }
        let mut pp = p.to_vec();
        pp[i] = p[i] + h;
        let plus = family.build(&pp)?;
        pp[i] = p[i] - h;
        let minus = family.build(&pp)?;
        Ok(Self { plus, minus, step: h })
    }
}

impl<O: LinearOperator> LinearOperator for ParamDerivative<O> {
    fn rows(&self) -> usize {
        self.plus.rows()
    }
    fn cols(&self) -> usize {
        self.plus.cols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.plus.apply_into(x, y);
        let m = self.minus.apply(x);
        let f = 0.5 / self.step;
        for (a, b) in y.iter_mut().zip(&m) {
            *a = (*a - b) * f;
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        self.plus.adjoint_into(y, x);
        let m = self.minus.adjoint(y);
        let f = 0.5 / self.step;
        for (a, b) in x.iter_mut().zip(&m) {
            *a = (*a - b) * f;
        }
    }
}

/// `(∂H/∂p_i)(p) u` by central differences.
pub fn op_derivative_apply<F: ParametricFamily>(family: &F, p: &[f64], i: usize, u: &[f64]) -> Result<Vec<f64>> {
    Ok(ParamDerivative::new(family, p, i)?.apply(u))
}

/// Power-iteration estimate of `‖A‖₂`.
pub fn estimate_norm(op: &dyn LinearOperator, iters: usize) -> f64 {
    let n = op.cols();
    if n == 0 || op.rows() == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * crate::math::sin(i as f64 * 1.7)).collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        crate::linalg::scale(&mut x, 1.0 / nx);
        let y = op.apply(&x);
        est = norm2(&y);
        x = op.adjoint(&y);
    }
    est
}

/// `|⟨Ax, y⟩ - ⟨x, Aᵀy⟩| / (‖A‖‖x‖‖y‖)` with a power-iteration norm
/// estimate.
pub fn adjoint_mismatch(op: &dyn LinearOperator, x: &[f64], y: &[f64]) -> f64 {
    let lhs = dot(&op.apply(x), y);
    let rhs = dot(x, &op.adjoint(y));
    let scale = estimate_norm(op, 30) * norm2(x) * norm2(y);
    if scale == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}
