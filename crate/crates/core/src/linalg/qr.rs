use alloc::vec;
use alloc::vec::Vec;

use super::{dot, DenseMatrix};
use crate::error::{dim_err, Result};
use crate::math::sqrt;

/// Thin factorization `A = Q R` with `Q` of size `m x n`, `R` upper
/// triangular `n x n` and nonnegative diagonal.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    /// Some `|R_jj|` fell below `max(m, n) * eps * max_j |R_jj|`.
    pub rank_deficient: bool,
}

/// Householder QR. Requires `rows >= cols`.
pub fn thin_qr(a: &DenseMatrix) -> Result<ThinQr> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return dim_err(alloc::format!("thin_qr needs rows >= cols, got {}x{}", m, n));
    }
    let mut w = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let x = &w.column(j)[j..];
        let nx = sqrt(dot(x, x));
        let mut v = x.to_vec();
        if nx == 0.0 {
            reflectors.push(vec![0.0; m - j]);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -nx } else { nx };
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if vv == 0.0 {
            reflectors.push(vec![0.0; m - j]);
            continue;
        }
        for k in j..n {
            let col = &mut w.column_mut(k)[j..];
            let f = 2.0 * dot(&v, col) / vv;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let inv = 1.0 / sqrt(vv);
        for vi in v.iter_mut() {
            *vi *= inv;
        }
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            r.set(i, j, w.get(i, j));
        }
    }
    let mut q = DenseMatrix::zeros(m, n);
    for j in 0..n {
        q.set(j, j, 1.0);
    }
    for j in (0..n).rev() {
        let v = &reflectors[j];
        for k in 0..n {
            let col = &mut q.column_mut(k)[j..];
            let f = 2.0 * dot(v, col);
            if f != 0.0 {
                for (c, vi) in col.iter_mut().zip(v) {
                    *c -= f * vi;
                }
            }
        }
    }
    for j in 0..n {
        if r.get(j, j) < 0.0 {
            for k in j..n {
                r.set(j, k, -r.get(j, k));
            }
            for c in q.column_mut(j) {
                *c = -*c;
            }
        }
    }
    let dmax = (0..n).fold(0.0f64, |acc, j| acc.max(r.get(j, j).abs()));
    let tol = (m.max(n) as f64) * f64::EPSILON * dmax;
    let rank_deficient = n > 0 && (dmax == 0.0 || (0..n).any(|j| r.get(j, j).abs() <= tol));
    Ok(ThinQr { q, r, rank_deficient })
}
