use alloc::vec::Vec;

use super::{axpy, norm2, scale, DenseMatrix};
use crate::error::{dim_err, Result};
use crate::operators::LinearOperator;

/// Matrix with orthonormal columns spanning a search space.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    cols: DenseMatrix,
}

impl Basis {
    pub fn empty(n: usize) -> Self {
        Self { cols: DenseMatrix::with_capacity(n, 0) }
    }

    /// Wraps `m` without checking orthonormality.
    pub fn from_orthonormal(m: DenseMatrix) -> Self {
        Self { cols: m }
    }

    /// Orthonormalizes the columns of `m`, dropping dependent ones.
    pub fn orthonormalize(m: &DenseMatrix) -> Self {
        let mut b = Self::empty(m.rows());
        for j in 0..m.cols() {
            b.push_direction(m.column(j), 1e-12);
        }
        b
    }

    pub fn dim(&self) -> usize {
        self.cols.rows()
    }

    pub fn width(&self) -> usize {
        self.cols.cols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.cols.column(j)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.cols
    }

    /// Two passes of classical Gram-Schmidt against the current columns.
    pub fn orthogonalize(&self, v: &mut [f64]) {
        for _ in 0..2 {
            let c = self.cols.tr_mul_vec(v);
            for (j, cj) in c.iter().enumerate() {
                axpy(-cj, self.cols.column(j), v);
            }
        }
    }

    /// Appends the normalized component of `v` orthogonal to the basis.
    /// Returns `false` (and leaves the basis alone) when that component is
    /// below `rel_tol * ‖v‖`.
    pub fn push_direction(&mut self, v: &[f64], rel_tol: f64) -> bool {
        assert_eq!(v.len(), self.dim(), "direction length mismatch");
        let before = norm2(v);
        if before == 0.0 || !before.is_finite() {
            return false;
        }
        let mut w = v.to_vec();
        self.orthogonalize(&mut w);
        let after = norm2(&w);
        if after <= rel_tol * before {
            return false;
        }
        scale(&mut w, 1.0 / after);
        self.cols.push_column(&w);
        true
    }

    /// `V z`
    pub fn combine(&self, z: &[f64]) -> Vec<f64> {
        self.cols.mul_vec(z)
    }

    /// `Vᵀ u`
    pub fn coefficients(&self, u: &[f64]) -> Vec<f64> {
        self.cols.tr_mul_vec(u)
    }

    /// `V W`
    pub fn transform(&self, w: &DenseMatrix) -> Basis {
        Basis { cols: self.cols.matmul(w) }
    }

    pub fn truncate(&mut self, k: usize) {
        self.cols.truncate_columns(k);
    }

    /// `max |VᵀV - I|`
    pub fn orthonormality_error(&self) -> f64 {
        self.cols.tr_matmul(&self.cols).max_abs_diff(&DenseMatrix::identity(self.width()))
    }

    /// `‖u - V Vᵀ u‖ / ‖u‖`
    pub fn projection_residual(&self, u: &[f64]) -> f64 {
        let p = self.combine(&self.coefficients(u));
        super::relative_change(&p, u)
    }
}

/// Golub-Kahan bidiagonalization of `op` started from `b`, with full
/// reorthogonalization. Returns the right Krylov basis
/// `span{Hᵀb, (HᵀH)Hᵀb, ...}` of width at most `steps`; it stops early on
/// breakdown.
pub fn golub_kahan(op: &dyn LinearOperator, b: &[f64], steps: usize) -> Result<Basis> {
    if b.len() != op.rows() {
        return dim_err("golub_kahan: b length does not match operator rows");
    }
    let mut v_basis = Basis::empty(op.cols());
    let mut u_basis = Basis::empty(op.rows());
    if steps == 0 || !u_basis.push_direction(b, 1e-12) {
        return Ok(v_basis);
    }
    let mut t = op.adjoint(u_basis.column(0));
    for i in 0..steps {
        if !v_basis.push_direction(&t, 1e-12) {
            break;
        }
        if i + 1 == steps {
            break;
        }
        let s = op.apply(v_basis.column(i));
        if !u_basis.push_direction(&s, 1e-12) {
            break;
        }
        t = op.adjoint(u_basis.column(i + 1));
    }
    Ok(v_basis)
}
