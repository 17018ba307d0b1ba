//! Fan-beam CT with exact ray-pixel intersection lengths (Siddon). The image
//! is `n x n` unit pixels centered at the origin, stored row-major with `x`
//! fastest and row 0 at the bottom. The single geometry parameter is a
//! global offset in degrees added to every projection angle.

use alloc::format;
use alloc::vec::Vec;

use super::{BlockedFamily, CsrBuilder, CsrMatrix, ParametricFamily};
use crate::error::{Error, Result};
use crate::math::{asin, cos, deg_to_rad, floor, hypot, sin, sqrt, tan};

#[derive(Debug, Clone, PartialEq)]
pub struct FanBeamGeometry {
    pub n: usize,
    pub angles_deg: Vec<f64>,
    pub n_detectors: usize,
    /// Source to rotation center.
    pub source_distance: f64,
    /// Rotation center to detector line.
    pub detector_distance: f64,
    pub detector_spacing: f64,
}

impl FanBeamGeometry {
    /// Source at twice the image width, detector at one image width, and a
    /// detector just wide enough to see the whole image disk.
    pub fn standard(n: usize, angles_deg: Vec<f64>, n_detectors: usize) -> Self {
        let half = n as f64 / 2.0;
        let source_distance = 4.0 * half;
        let detector_distance = 2.0 * half;
        let fan = asin(core::f64::consts::SQRT_2 * half / source_distance);
        let t_max = (source_distance + detector_distance) * tan(fan) * 1.05;
        let detector_spacing = 2.0 * t_max / n_detectors.max(1) as f64;
        Self { n, angles_deg, n_detectors, source_distance, detector_distance, detector_spacing }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_detectors == 0 {
            return Err(Error::Geometry("image and detector sizes must be positive".into()));
        }
        if self.angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("projection angles"));
        }
        let support = self.n as f64 / 2.0 * core::f64::consts::SQRT_2;
        if !(self.source_distance > support) {
            return Err(Error::Geometry(format!(
                "source at distance {} lies inside the image support of radius {}",
                self.source_distance, support
            )));
        }
        if !(self.detector_distance >= 0.0) || !(self.detector_spacing > 0.0) {
            return Err(Error::Geometry("detector distance and spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.angles_deg.len() * self.n_detectors
    }

    pub fn cols(&self) -> usize {
        self.n * self.n
    }

    /// Source and detector-bin positions for one ray.
    pub fn ray(&self, angle_deg: f64, det: usize) -> ((f64, f64), (f64, f64)) {
        let th = deg_to_rad(angle_deg);
        let (c, s) = (cos(th), sin(th));
        let src = (self.source_distance * c, self.source_distance * s);
        let t = (det as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing;
        let dst = (-self.detector_distance * c - t * s, -self.detector_distance * s + t * c);
        (src, dst)
    }
}

/// `p ↦ H(p)`, angles shifted by `p[0]` degrees.
#[derive(Debug, Clone)]
pub struct FanBeamFamily {
    pub geometry: FanBeamGeometry,
}

impl FanBeamFamily {
    pub fn new(geometry: FanBeamGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self { geometry })
    }
}

impl ParametricFamily for FanBeamFamily {
    type Op = CsrMatrix;
    fn n_params(&self) -> usize {
        1
    }
    fn build(&self, p: &[f64]) -> Result<CsrMatrix> {
        if p.len() != 1 {
            return Err(Error::Dimension("fan-beam family takes one parameter".into()));
        }
        fan_beam_matrix(&self.geometry, p[0])
    }
}

impl BlockedFamily for FanBeamFamily {
    fn units(&self) -> usize {
        self.geometry.angles_deg.len()
    }
    fn rows_per_unit(&self, _unit: usize) -> usize {
        self.geometry.n_detectors
    }
    fn restrict(&self, units: &[usize]) -> Result<Self> {
        let mut g = self.geometry.clone();
        g.angles_deg = units.iter().map(|&u| self.geometry.angles_deg[u]).collect();
        Ok(Self { geometry: g })
    }
}

/// System matrix for angles `θ_i + offset_deg`.
pub fn fan_beam_matrix(g: &FanBeamGeometry, offset_deg: f64) -> Result<CsrMatrix> {
    g.validate()?;
    if !offset_deg.is_finite() {
        return Err(Error::NonFinite("angle offset"));
    }
    let mut b = CsrBuilder::new(g.cols());
    let mut alphas = Vec::with_capacity(2 * g.n + 4);
    for &a in &g.angles_deg {
        for d in 0..g.n_detectors {
            let (src, dst) = g.ray(a + offset_deg, d);
            siddon(g.n, src, dst, &mut alphas, |j, len| b.add(j, len));
            b.finish_row();
        }
    }
    Ok(b.build())
}

/// Intersection lengths of segment `src -> dst` with the unit pixels of an
/// `n x n` grid centered at the origin.
pub fn siddon(n: usize, src: (f64, f64), dst: (f64, f64), alphas: &mut Vec<f64>, mut emit: impl FnMut(usize, f64)) {
    let half = n as f64 / 2.0;
    let (x0, y0) = src;
    let (dx, dy) = (dst.0 - x0, dst.1 - y0);
    let len = hypot(dx, dy);
    let (mut amin, mut amax) = (0.0f64, 1.0f64);
    for (o, d) in [(x0, dx), (y0, dy)] {
        if d != 0.0 {
            let a0 = (-half - o) / d;
            let a1 = (half - o) / d;
            amin = amin.max(a0.min(a1));
            amax = amax.min(a0.max(a1));
        } else if o <= -half || o >= half {
            return;
        }
    }
    if !(amax > amin) {
        return;
    }
    alphas.clear();
    alphas.push(amin);
    alphas.push(amax);
    for (o, d) in [(x0, dx), (y0, dy)] {
        if d == 0.0 {
            continue;
        }
        for i in 0..=n {
            let a = (-half + i as f64 - o) / d;
            if a > amin && a < amax {
                alphas.push(a);
            }
        }
    }
    alphas.sort_unstable_by(|a, b| a.total_cmp(b));
    for w in alphas.windows(2) {
        let seg = w[1] - w[0];
        if seg <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let ix = floor(x0 + mid * dx + half).clamp(0.0, n as f64 - 1.0) as usize;
        let iy = floor(y0 + mid * dy + half).clamp(0.0, n as f64 - 1.0) as usize;
        emit(iy * n + ix, seg * len);
    }
}

/// Length of the chord of the segment `src -> dst` inside the square
/// `[-h, h]²`, used as a cross-check on ray sums.
pub fn chord_in_square(h: f64, src: (f64, f64), dst: (f64, f64)) -> f64 {
    let (dx, dy) = (dst.0 - src.0, dst.1 - src.1);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (o, d) in [(src.0, dx), (src.1, dy)] {
        if d == 0.0 {
            if o.abs() >= h {
                return 0.0;
            }
            continue;
        }
        let (a, b) = ((-h - o) / d, (h - o) / d);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    if hi > lo {
        (hi - lo) * sqrt(dx * dx + dy * dy)
    } else {
        0.0
    }
}
