use alloc::vec;
use alloc::vec::Vec;

use super::{dot, norm2, thin_qr, truncated_svd, DenseMatrix, ThinQr};
use crate::error::{arg_err, dim_err, Result};
use crate::math::sqrt;

/// Solution of a stacked reduced least-squares problem.
#[derive(Debug, Clone)]
pub struct StackedSolution {
    pub z: Vec<f64>,
    /// The stacked matrix was rank deficient and `z` is the minimum-norm
    /// solution.
    pub rank_deficient: bool,
}

/// Projected problem `min ½‖R_A z - c‖² + (λ/2)‖R_Ψ z‖²` together with the
/// part of `‖b‖²` outside `range(HV)`, so full-space residual norms can be
/// evaluated from reduced quantities.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub r_a: DenseMatrix,
    pub r_psi: DenseMatrix,
    pub rhs_top: Vec<f64>,
    /// `‖(I - Q_A Q_Aᵀ) b‖²`
    pub offset_sq: f64,
    /// Length of the full measurement vector.
    pub m: usize,
}

impl ReducedSystem {
    /// Factors `HV` and `PΨV`. Short matrices are padded with zero rows.
    pub fn from_images(hv: &DenseMatrix, reg_v: &DenseMatrix, b: &[f64]) -> Result<Self> {
        if hv.rows() != b.len() {
            return dim_err("HV rows do not match b");
        }
        if hv.cols() != reg_v.cols() {
            return dim_err("HV and ΨV widths differ");
        }
        let k = hv.cols();
        let qa = thin_qr(&hv.pad_rows(k))?;
        let mut bp = b.to_vec();
        bp.resize(qa.q.rows(), 0.0);
        let rhs_top = qa.q.tr_mul_vec(&bp);
        let proj = qa.q.mul_vec(&rhs_top);
        let offset_sq = bp.iter().zip(&proj).map(|(x, y)| (x - y) * (x - y)).sum();
        let qp = thin_qr(&reg_v.pad_rows(k))?;
        Ok(Self { r_a: qa.r, r_psi: qp.r, rhs_top, offset_sq, m: b.len() })
    }

    pub fn width(&self) -> usize {
        self.r_a.cols()
    }

    pub fn solve(&self, lambda: f64) -> Result<StackedSolution> {
        solve_stacked_ls(&self.r_a, &self.r_psi, &self.rhs_top, lambda)
    }

    pub fn solve_anchored(&self, lambda: f64, anchor: &[f64]) -> Result<StackedSolution> {
        solve_stacked_ls_anchored(&self.r_a, &self.r_psi, &self.rhs_top, lambda, Some(anchor))
    }

    /// Full residual `‖H V z - b‖`.
    pub fn residual_norm(&self, z: &[f64]) -> f64 {
        let r = self.r_a.mul_vec(z);
        let s: f64 = r.iter().zip(&self.rhs_top).map(|(a, c)| (a - c) * (a - c)).sum();
        sqrt(s + self.offset_sq)
    }

    /// Generalized cross validation function at `lambda`.
    pub fn gcv(&self, lambda: f64) -> Result<f64> {
        let sol = self.solve(lambda)?;
        let res = self.residual_norm(&sol.z);
        let trace = self.influence_trace(lambda)?;
        let denom = (self.m as f64 - trace).max(1e-12);
        Ok(res * res / (denom * denom))
    }

    /// `tr(R_A (R_AᵀR_A + λR_ΨᵀR_Ψ)^+ R_Aᵀ)`
    pub fn influence_trace(&self, lambda: f64) -> Result<f64> {
        let s = stacked(&self.r_a, &self.r_psi, lambda);
        let qr = thin_qr(&s)?;
        let k = self.width();
        if !qr.rank_deficient {
            let mut total = 0.0;
            for i in 0..self.r_a.rows() {
                let row: Vec<f64> = (0..k).map(|j| self.r_a.get(i, j)).collect();
                let x = forward_substitute_transposed(&qr.r, &row);
                total += dot(&x, &x);
            }
            return Ok(total);
        }
        let svd = truncated_svd(&s, k);
        let mut total = 0.0;
        for (i, sig) in svd.sigma.iter().enumerate() {
            let av = self.r_a.mul_vec(svd.v.column(i));
            total += dot(&av, &av) / (sig * sig);
        }
        Ok(total)
    }
}

fn stacked(r_a: &DenseMatrix, r_psi: &DenseMatrix, lambda: f64) -> DenseMatrix {
    let s = DenseMatrix::vstack(r_a, &r_psi.scaled(sqrt(lambda)));
    s.pad_rows(r_a.cols())
}

/// Solves `min ‖[R_A; √λ R_Ψ] z - [c; 0]‖` by QR of the stacked matrix, with
/// a minimum-norm SVD fallback when it is rank deficient.
pub fn solve_stacked_ls(
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    rhs_top: &[f64],
    lambda: f64,
) -> Result<StackedSolution> {
    solve_stacked_ls_anchored(r_a, r_psi, rhs_top, lambda, None)
}

/// As [`solve_stacked_ls`], but a rank-deficient system returns the
/// minimizer closest to `anchor` instead of the minimum-norm one.
pub fn solve_stacked_ls_anchored(
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    rhs_top: &[f64],
    lambda: f64,
    anchor: Option<&[f64]>,
) -> Result<StackedSolution> {
    if r_a.cols() != r_psi.cols() || rhs_top.len() != r_a.rows() {
        return dim_err("stacked least squares: inconsistent shapes");
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return arg_err("regularization parameter must be finite and nonnegative");
    }
    let k = r_a.cols();
    if k == 0 {
        return Ok(StackedSolution { z: Vec::new(), rank_deficient: false });
    }
    let s = stacked(r_a, r_psi, lambda);
    let mut rhs = vec![0.0; s.rows()];
    rhs[..rhs_top.len()].copy_from_slice(rhs_top);
    let ThinQr { q, r, rank_deficient } = thin_qr(&s)?;
    if !rank_deficient {
        let c = q.tr_mul_vec(&rhs);
        return Ok(StackedSolution { z: back_substitute(&r, &c), rank_deficient: false });
    }
    let svd = truncated_svd(&s, k);
    let mut z = vec![0.0; k];
    for (i, sig) in svd.sigma.iter().enumerate() {
        let coef = dot(svd.u.column(i), &rhs) / sig;
        super::axpy(coef, svd.v.column(i), &mut z);
    }
    if let Some(a) = anchor {
        if a.len() != k {
            return dim_err("anchor length does not match the system");
        }
        let mut free = a.to_vec();
        for i in 0..svd.sigma.len() {
            let c = dot(svd.v.column(i), a);
            super::axpy(-c, svd.v.column(i), &mut free);
        }
        super::axpy(1.0, &free, &mut z);
    }
    Ok(StackedSolution { z, rank_deficient: true })
}

/// Solves `R x = c` for upper-triangular `R`.
pub fn back_substitute(r: &DenseMatrix, c: &[f64]) -> Vec<f64> {
    let n = r.cols();
    let mut x = c[..n].to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= r.get(i, j) * x[j];
        }
        x[i] = s / r.get(i, i);
    }
    x
}

/// Solves `Rᵀ x = c` for upper-triangular `R`.
fn forward_substitute_transposed(r: &DenseMatrix, c: &[f64]) -> Vec<f64> {
    let n = r.cols();
    let mut x = c.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= r.get(j, i) * x[j];
        }
        x[i] = s / r.get(i, i);
    }
    x
}

/// Cholesky solve of a symmetric positive definite system. `None` when the
/// matrix is not numerically positive definite.
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return None;
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = sqrt(d);
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    if norm2(&y).is_finite() {
        Some(y)
    } else {
        None
    }
}
