//! Dense kernels for the small projected problems: column-major matrices,
//! Householder QR, one-sided Jacobi SVD, Golub-Kahan bases and the stacked
//! least-squares solve.

mod dense;
mod krylov;
mod lstsq;
mod qr;
mod svd;

pub use dense::DenseMatrix;
pub use krylov::{golub_kahan, Basis};
pub use lstsq::{back_substitute, solve_spd, solve_stacked_ls, solve_stacked_ls_anchored, ReducedSystem, StackedSolution};
pub use qr::{thin_qr, ThinQr};
pub use svd::{truncated_svd, TruncatedSvd};

use crate::math::sqrt;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(x: &mut [f64], alpha: f64) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
}

/// `‖a - b‖ / ‖b‖`, infinite when `b` is zero and `a` is not.
pub fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    let diff = sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum());
    let nb = norm2(b);
    if nb == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / nb
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}
