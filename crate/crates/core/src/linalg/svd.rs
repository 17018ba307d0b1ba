use alloc::vec::Vec;

use super::{dot, DenseMatrix};
use crate::math::sqrt;

/// Leading singular triplets, sorted by decreasing singular value.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl TruncatedSvd {
    pub fn retained(&self) -> usize {
        self.sigma.len()
    }
}

/// Top-`r` singular triplets of `a` by one-sided Jacobi. Singular values at
/// or below `max(m, n) * eps * sigma_max` are dropped, so fewer than `r`
/// triplets may come back.
pub fn truncated_svd(a: &DenseMatrix, r: usize) -> TruncatedSvd {
    if a.rows() < a.cols() {
        let t = truncated_svd(&a.transpose(), r);
        return TruncatedSvd { u: t.v, sigma: t.sigma, v: t.u };
    }
    let (m, n) = (a.rows(), a.cols());
    let mut u = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(u.column(p), u.column(p));
                let beta = dot(u.column(q), u.column(q));
                let gamma = dot(u.column(p), u.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut u, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| sqrt(dot(u.column(j), u.column(j)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let smax = order.first().map(|&i| norms[i]).unwrap_or(0.0);
    let tol = (m.max(n) as f64) * f64::EPSILON * smax;
    let mut out_u = DenseMatrix::with_capacity(m, r.min(n));
    let mut out_v = DenseMatrix::with_capacity(n, r.min(n));
    let mut sigma = Vec::new();
    for &j in order.iter().take(r) {
        let s = norms[j];
        if s <= tol || s == 0.0 {
            break;
        }
        let col: Vec<f64> = u.column(j).iter().map(|x| x / s).collect();
        out_u.push_column(&col);
        out_v.push_column(v.column(j));
        sigma.push(s);
    }
    TruncatedSvd { u: out_u, sigma, v: out_v }
}

fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.rows() {
        let a = m.get(i, p);
        let b = m.get(i, q);
        m.set(i, p, c * a - s * b);
        m.set(i, q, s * a + c * b);
    }
}
