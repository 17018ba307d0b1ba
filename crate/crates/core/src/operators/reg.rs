//! Forward-difference regularization operators on `nt` frames of `nx x ny`
//! images. The last difference in each direction is dropped, so constants
//! lie in the nullspace.

use super::motion::MotionOperator;
use super::{LinearOperator, VStack};
use crate::error::{arg_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    /// Horizontal and vertical differences in every frame.
    Spatial2d,
    /// Spatial differences plus differences between consecutive frames.
    SpatioTemporal,
    /// Same operator as `SpatioTemporal`; the name used for the dynamic
    /// anisotropic total-variation baseline.
    AnisoTv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteDifferences {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub temporal: bool,
}

impl FiniteDifferences {
    pub fn new(kind: RegKind, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nt == 0 {
            return arg_err("regularizer needs nonempty image and frame counts");
        }
        Ok(Self { nx, ny, nt, temporal: !matches!(kind, RegKind::Spatial2d) })
    }

    fn frame_rows(&self) -> usize {
        self.ny * (self.nx - 1) + self.nx * (self.ny - 1)
    }

    pub fn spatial_rows(&self) -> usize {
        self.nt * self.frame_rows()
    }
}

impl LinearOperator for FiniteDifferences {
    fn rows(&self) -> usize {
        let t = if self.temporal { (self.nt - 1) * self.nx * self.ny } else { 0 };
        self.spatial_rows() + t
    }
    fn cols(&self) -> usize {
        self.nx * self.ny * self.nt
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let ns = nx * ny;
        let mut r = 0;
        for t in 0..self.nt {
            let f = &x[t * ns..(t + 1) * ns];
            for iy in 0..ny {
                for ix in 0..nx - 1 {
                    y[r] = f[iy * nx + ix + 1] - f[iy * nx + ix];
                    r += 1;
                }
            }
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    y[r] = f[(iy + 1) * nx + ix] - f[iy * nx + ix];
                    r += 1;
                }
            }
        }
        if self.temporal {
            for t in 0..self.nt - 1 {
                for k in 0..ns {
                    y[r] = x[(t + 1) * ns + k] - x[t * ns + k];
                    r += 1;
                }
            }
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let ns = nx * ny;
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut r = 0;
        for t in 0..self.nt {
            let f = &mut x[t * ns..(t + 1) * ns];
            for iy in 0..ny {
                for ix in 0..nx - 1 {
                    f[iy * nx + ix + 1] += y[r];
                    f[iy * nx + ix] -= y[r];
                    r += 1;
                }
            }
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    f[(iy + 1) * nx + ix] += y[r];
                    f[iy * nx + ix] -= y[r];
                    r += 1;
                }
            }
        }
        if self.temporal {
            for t in 0..self.nt - 1 {
                for k in 0..ns {
                    x[(t + 1) * ns + k] += y[r];
                    x[t * ns + k] -= y[r];
                    r += 1;
                }
            }
        }
    }
}

/// Regularization operator handed to the solvers.
#[derive(Debug, Clone)]
pub enum RegOperator {
    Differences(FiniteDifferences),
    /// Per-frame spatial differences stacked over motion-compensated
    /// temporal residuals.
    OpticalFlow(VStack<FiniteDifferences, MotionOperator>),
}

impl RegOperator {
    pub fn new(kind: RegKind, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        Ok(Self::Differences(FiniteDifferences::new(kind, nx, ny, nt)?))
    }
}

impl LinearOperator for RegOperator {
    fn rows(&self) -> usize {
        match self {
            Self::Differences(d) => d.rows(),
            Self::OpticalFlow(s) => s.rows(),
        }
    }
    fn cols(&self) -> usize {
        match self {
            Self::Differences(d) => d.cols(),
            Self::OpticalFlow(s) => s.cols(),
        }
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Self::Differences(d) => d.apply_into(x, y),
            Self::OpticalFlow(s) => s.apply_into(x, y),
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        match self {
            Self::Differences(d) => d.adjoint_into(y, x),
            Self::OpticalFlow(s) => s.adjoint_into(y, x),
        }
    }
}
