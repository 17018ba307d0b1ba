//! Photoacoustic circular-mean operator. The image covers `[-1, 1]²` with
//! `n x n` pixels. Sensors sit on concentric circles of radius
//! `2j/n_c + p` and record means of the bilinearly interpolated image over
//! circles of fixed radii centered at the sensor.

use alloc::format;
use alloc::vec::Vec;

use super::{BlockedFamily, CsrBuilder, CsrMatrix, ParametricFamily};
use crate::error::{Error, Result};
use crate::math::{ceil, cos, floor, sin};

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct CircularArrayGeometry {
    pub n: usize,
    pub n_circles: usize,
    pub sensors_per_circle: usize,
    pub radii_per_sensor: usize,
}

impl CircularArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n_circles == 0 || self.sensors_per_circle == 0 || self.radii_per_sensor < 2 {
            return Err(Error::Geometry("circular array needs n >= 2, at least one sensor and two radii".into()));
        }
        Ok(())
    }

    pub fn pitch(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn nominal_radius(&self, circle: usize) -> f64 {
        2.0 * (circle + 1) as f64 / self.n_circles as f64
    }

    /// Integration radii used by every sensor on `circle`; independent of
    /// the radius offset.
    pub fn integration_radii(&self, circle: usize) -> Vec<f64> {
        let r = self.nominal_radius(circle);
        let lo = (r - core::f64::consts::SQRT_2).max(self.pitch());
        let hi = r + core::f64::consts::SQRT_2;
        let k = self.radii_per_sensor;
        (0..k).map(|l| lo + (hi - lo) * l as f64 / (k - 1) as f64).collect()
    }
}

/// `p ↦ H(p)` over a chosen list of sensors, `p[0]` the radius offset.
#[derive(Debug, Clone)]
pub struct CircularMeanFamily {
    pub geometry: CircularArrayGeometry,
    /// `(circle, index on circle)`
    sensors: Vec<(usize, usize)>,
}

impl CircularMeanFamily {
    pub fn new(geometry: CircularArrayGeometry) -> Result<Self> {
        geometry.validate()?;
        let sensors = (0..geometry.n_circles)
            .flat_map(|c| (0..geometry.sensors_per_circle).map(move |k| (c, k)))
            .collect();
        Ok(Self { geometry, sensors })
    }

    pub fn sensors(&self) -> &[(usize, usize)] {
        &self.sensors
    }
}

impl ParametricFamily for CircularMeanFamily {
    type Op = CsrMatrix;
    fn n_params(&self) -> usize {
        1
    }
    fn build(&self, p: &[f64]) -> Result<CsrMatrix> {
        if p.len() != 1 {
            return Err(Error::Dimension("circular-mean family takes one parameter".into()));
        }
        if !p[0].is_finite() {
            return Err(Error::NonFinite("radius offset"));
        }
        let g = &self.geometry;
        for c in 0..g.n_circles {
            let r = g.nominal_radius(c) + p[0];
            if r <= 0.0 {
                return Err(Error::Geometry(format!("sensor circle {} has nonpositive radius {}", c + 1, r)));
            }
        }
        let n = g.n;
        let radii: Vec<Vec<f64>> = (0..g.n_circles).map(|c| g.integration_radii(c)).collect();
        let mut b = CsrBuilder::new(n * n);
        let half_pitch = 0.5 * g.pitch();
        for &(c, k) in &self.sensors {
            let r = g.nominal_radius(c) + p[0];
            let phi = TWO_PI * k as f64 / g.sensors_per_circle as f64;
            let (qx, qy) = (r * cos(phi), r * sin(phi));
            for &rho in &radii[c] {
                let ns = (ceil(TWO_PI * rho / half_pitch) as usize).max(16);
                let w = 1.0 / ns as f64;
                for s in 0..ns {
                    let psi = phi + TWO_PI * (s as f64 + 0.5) / ns as f64;
                    bilinear(n, qx + rho * cos(psi), qy + rho * sin(psi), w, &mut b);
                }
                b.finish_row();
            }
        }
        Ok(b.build())
    }
}

impl BlockedFamily for CircularMeanFamily {
    fn units(&self) -> usize {
        self.sensors.len()
    }
    fn rows_per_unit(&self, _unit: usize) -> usize {
        self.geometry.radii_per_sensor
    }
    fn restrict(&self, units: &[usize]) -> Result<Self> {
        Ok(Self { geometry: self.geometry.clone(), sensors: units.iter().map(|&u| self.sensors[u]).collect() })
    }
}

/// Zero-extended bilinear interpolation weights at `(x, y)` in `[-1, 1]²`.
fn bilinear(n: usize, x: f64, y: f64, w: f64, b: &mut CsrBuilder) {
    let fx = (x + 1.0) * n as f64 / 2.0 - 0.5;
    let fy = (y + 1.0) * n as f64 / 2.0 - 0.5;
    let (ix, iy) = (floor(fx), floor(fy));
    let (tx, ty) = (fx - ix, fy - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let nn = n as i64;
    for (dy, wy) in [(0i64, 1.0 - ty), (1, ty)] {
        let yy = iy + dy;
        if yy < 0 || yy >= nn || wy == 0.0 {
            continue;
        }
        for (dx, wx) in [(0i64, 1.0 - tx), (1, tx)] {
            let xx = ix + dx;
            if xx < 0 || xx >= nn || wx == 0.0 {
                continue;
            }
            b.add((yy * nn + xx) as usize, w * wx * wy);
        }
    }
}
