//! Motion-compensated temporal differences. A displacement field `s` warps
//! a frame by bilinear sampling at `x + s(x)` (pixel units, positions
//! clamped to the grid). The stacked operator holds forward rows
//! `u_t - M(s_t) u_{t+1}` followed by reverse rows `u_{t+1} - M(s'_t) u_t`.

use alloc::vec::Vec;

use super::LinearOperator;
use crate::error::{dim_err, Result};
use crate::math::floor;

/// Displacement in pixels per frame for every pixel of one frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
}

impl Displacement {
    pub fn zeros(ns: usize) -> Self {
        Self { sx: alloc::vec![0.0; ns], sy: alloc::vec![0.0; ns] }
    }

    pub fn uniform(ns: usize, sx: f64, sy: f64) -> Self {
        Self { sx: alloc::vec![sx; ns], sy: alloc::vec![sy; ns] }
    }

    pub fn negated(&self) -> Self {
        Self { sx: self.sx.iter().map(|v| -v).collect(), sy: self.sy.iter().map(|v| -v).collect() }
    }
}

/// Velocity field for a whole sequence: one displacement per frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub nx: usize,
    pub ny: usize,
    pub pairs: Vec<Displacement>,
}

impl VelocityField {
    pub fn zeros(nx: usize, ny: usize, n_pairs: usize) -> Self {
        Self { nx, ny, pairs: (0..n_pairs).map(|_| Displacement::zeros(nx * ny)).collect() }
    }
}

/// Bilinear warp of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Warp {
    idx: Vec<[u32; 4]>,
    w: Vec<[f64; 4]>,
}

impl Warp {
    /// Returns the warp and the number of sample positions clamped.
    pub fn new(nx: usize, ny: usize, d: &Displacement) -> Result<(Self, usize)> {
        let ns = nx * ny;
        if d.sx.len() != ns || d.sy.len() != ns {
            return dim_err("displacement size does not match frame");
        }
        let mut idx = Vec::with_capacity(ns);
        let mut w = Vec::with_capacity(ns);
        let mut clamped = 0;
        for iy in 0..ny {
            for ix in 0..nx {
                let k = iy * nx + ix;
                let px = ix as f64 + d.sx[k];
                let py = iy as f64 + d.sy[k];
                let (cx, ox) = clamp_axis(px, nx);
                let (cy, oy) = clamp_axis(py, ny);
                if ox || oy {
                    clamped += 1;
                }
                let (x0, tx) = split(cx, nx);
                let (y0, ty) = split(cy, ny);
                let x1 = (x0 + 1).min(nx - 1);
                let y1 = (y0 + 1).min(ny - 1);
                idx.push([
                    (y0 * nx + x0) as u32,
                    (y0 * nx + x1) as u32,
                    (y1 * nx + x0) as u32,
                    (y1 * nx + x1) as u32,
                ]);
                w.push([(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty]);
            }
        }
        Ok((Self { idx, w }, clamped))
    }

    fn apply_add(&self, v: &[f64], alpha: f64, out: &mut [f64]) {
        for (k, (ix, wk)) in self.idx.iter().zip(&self.w).enumerate() {
            let s = wk[0] * v[ix[0] as usize]
                + wk[1] * v[ix[1] as usize]
                + wk[2] * v[ix[2] as usize]
                + wk[3] * v[ix[3] as usize];
            out[k] += alpha * s;
        }
    }

    fn adjoint_add(&self, y: &[f64], alpha: f64, out: &mut [f64]) {
        for (k, (ix, wk)) in self.idx.iter().zip(&self.w).enumerate() {
            let a = alpha * y[k];
            for j in 0..4 {
                out[ix[j] as usize] += wk[j] * a;
            }
        }
    }

    /// `M(s) v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.idx.len()];
        self.apply_add(v, 1.0, &mut out);
        out
    }

    /// Row weights; each row is nonnegative and sums to one.
    pub fn row_weights(&self, k: usize) -> ([u32; 4], [f64; 4]) {
        (self.idx[k], self.w[k])
    }
}

fn clamp_axis(p: f64, n: usize) -> (f64, bool) {
    let hi = (n - 1) as f64;
    if p < 0.0 {
        (0.0, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

fn split(p: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i = (floor(p) as usize).min(n - 2);
    (i, p - i as f64)
}

/// Stacked forward and reverse motion residuals over `nt` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOperator {
    nx: usize,
    ny: usize,
    nt: usize,
    forward: Vec<Warp>,
    reverse: Vec<Warp>,
}

impl MotionOperator {
    /// Returns the operator and the number of clamped sample positions.
    pub fn new(forward: &VelocityField, reverse: &VelocityField) -> Result<(Self, usize)> {
        let (nx, ny) = (forward.nx, forward.ny);
        if reverse.nx != nx || reverse.ny != ny || reverse.pairs.len() != forward.pairs.len() {
            return dim_err("forward and reverse fields disagree in shape");
        }
        let mut clamped = 0;
        let mut fw = Vec::new();
        let mut rv = Vec::new();
        for (f, r) in forward.pairs.iter().zip(&reverse.pairs) {
            let (a, ca) = Warp::new(nx, ny, f)?;
            let (b, cb) = Warp::new(nx, ny, r)?;
            clamped += ca + cb;
            fw.push(a);
            rv.push(b);
        }
        Ok((Self { nx, ny, nt: forward.pairs.len() + 1, forward: fw, reverse: rv }, clamped))
    }
}

impl LinearOperator for MotionOperator {
    fn rows(&self) -> usize {
        2 * (self.nt - 1) * self.nx * self.ny
    }
    fn cols(&self) -> usize {
        self.nt * self.nx * self.ny
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.nx * self.ny;
        let half = (self.nt - 1) * ns;
        for t in 0..self.nt - 1 {
            let (ut, un) = (&x[t * ns..(t + 1) * ns], &x[(t + 1) * ns..(t + 2) * ns]);
            let out = &mut y[t * ns..(t + 1) * ns];
            out.copy_from_slice(ut);
            self.forward[t].apply_add(un, -1.0, out);
            let out = &mut y[half + t * ns..half + (t + 1) * ns];
            out.copy_from_slice(un);
            self.reverse[t].apply_add(ut, -1.0, out);
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let ns = self.nx * self.ny;
        let half = (self.nt - 1) * ns;
        x.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..self.nt - 1 {
            let yf = &y[t * ns..(t + 1) * ns];
            let yr = &y[half + t * ns..half + (t + 1) * ns];
            for k in 0..ns {
                x[t * ns + k] += yf[k];
                x[(t + 1) * ns + k] += yr[k];
            }
            let (lo, hi) = x.split_at_mut((t + 1) * ns);
            self.forward[t].adjoint_add(yf, -1.0, &mut hi[..ns]);
            self.reverse[t].adjoint_add(yr, -1.0, &mut lo[t * ns..]);
        }
    }
}
