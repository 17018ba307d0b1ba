//! Synthetic test objects. Images are `n x n` on `[-1, 1]²`, row-major
//! with row 0 at the bottom; every value lies in `[0, 1]`.

use nlgks_core::dynamic::DynamicSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    Tectonic,
    MovingShapes,
    DynamicBlocks,
}

impl PhantomKind {
    pub fn is_dynamic(self) -> bool {
        matches!(self, Self::MovingShapes | Self::DynamicBlocks)
    }
}

fn centre(i: usize, n: usize) -> f64 {
    -1.0 + (i as f64 + 0.5) * 2.0 / n as f64
}

// (value, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Modified (high-contrast) Shepp-Logan head, sampled at pixel centres.
pub fn shepp_logan(n: usize) -> Vec<f64> {
    let mut img = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = (centre(ix, n), centre(iy, n));
            let mut v = 0.0;
            for &(a, ea, eb, x0, y0, phi) in &SHEPP_LOGAN {
                let (s, c) = phi.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let (u, w) = (dx * c + dy * s, -dx * s + dy * c);
                if (u / ea).powi(2) + (w / eb).powi(2) <= 1.0 {
                    v += a;
                }
            }
            img[iy * n + ix] = v.clamp(0.0, 1.0);
        }
    }
    img
}

/// Voronoi plates with piecewise-constant absorption and sharp borders.
pub fn tectonic(n: usize, plates: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plates = plates.max(1);
    let sites: Vec<(f64, f64, f64)> = (0..plates)
        .map(|_| (rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), rng.random_range(0.15..1.0)))
        .collect();
    let mut img = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = (centre(ix, n), centre(iy, n));
            let best = sites
                .iter()
                .map(|&(sx, sy, v)| ((x - sx).powi(2) + (y - sy).powi(2), v))
                .fold((f64::INFINITY, 0.0), |m, c| if c.0 < m.0 { c } else { m });
            img[iy * n + ix] = best.1;
        }
    }
    img
}

/// Rigid shape translating by an integer pixel velocity per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    /// Lower-left pixel of the bounding box in frame 0.
    pub x0: i64,
    pub y0: i64,
    pub size: usize,
    pub value: f64,
    pub disk: bool,
    pub velocity: (i64, i64),
}

impl Shape {
    fn covers(&self, ix: i64, iy: i64, t: usize) -> bool {
        let (dx, dy) = (ix - self.x0 - self.velocity.0 * t as i64, iy - self.y0 - self.velocity.1 * t as i64);
        let s = self.size as i64;
        if dx < 0 || dy < 0 || dx >= s || dy >= s {
            return false;
        }
        if !self.disk {
            return true;
        }
        let r = self.size as f64 / 2.0;
        let (cx, cy) = (dx as f64 + 0.5 - r, dy as f64 + 0.5 - r);
        cx * cx + cy * cy <= r * r
    }
}

/// Default pair of shapes for an `n x n` sequence.
pub fn default_shapes(n: usize) -> Vec<Shape> {
    let s = (n / 4).max(2);
    vec![
        Shape { x0: (n / 8) as i64, y0: (n / 2) as i64, size: s, value: 1.0, disk: true, velocity: (1, 0) },
        Shape { x0: (n / 2) as i64, y0: (n / 8) as i64, size: s, value: 0.6, disk: false, velocity: (0, 1) },
    ]
}

pub fn moving_shapes(n: usize, nt: usize, shapes: &[Shape]) -> DynamicSequence {
    let mut data = vec![0.0; n * n * nt];
    for t in 0..nt {
        for iy in 0..n {
            for ix in 0..n {
                let v: f64 = shapes.iter().filter(|s| s.covers(ix as i64, iy as i64, t)).map(|s| s.value).sum();
                data[t * n * n + iy * n + ix] = v.clamp(0.0, 1.0);
            }
        }
    }
    DynamicSequence { nx: n, ny: n, nt, data }
}

// Dynamic blocks: (x range, y range) as fractions of n in frame 0, start
// and end level, velocity in pixels per frame.
const BLOCKS: [((f64, f64), (f64, f64), f64, f64, (usize, usize)); 4] = [
    ((0.08, 0.30), (0.60, 0.85), 0.2, 1.0, (1, 0)),
    ((0.65, 0.90), (0.55, 0.85), 0.9, 0.3, (0, 0)),
    ((0.10, 0.35), (0.08, 0.28), 0.5, 0.8, (0, 1)),
    ((0.55, 0.85), (0.12, 0.40), 0.7, 0.4, (0, 0)),
];

/// Four rectangles whose intensities ramp smoothly between two levels;
/// two of them drift by one pixel per frame.
pub fn dynamic_blocks(n: usize, nt: usize) -> DynamicSequence {
    let mut data = vec![0.0; n * n * nt];
    for t in 0..nt {
        let s = if nt > 1 { t as f64 / (nt - 1) as f64 } else { 0.0 };
        let ramp = 0.5 - 0.5 * (std::f64::consts::PI * s).cos();
        for &((x0, x1), (y0, y1), a, b, (vx, vy)) in &BLOCKS {
            let v = a + (b - a) * ramp;
            let (ix0, ix1) = ((x0 * n as f64) as usize + vx * t, (x1 * n as f64) as usize + vx * t);
            let (iy0, iy1) = ((y0 * n as f64) as usize + vy * t, (y1 * n as f64) as usize + vy * t);
            for iy in iy0..iy1.min(n) {
                for ix in ix0..ix1.min(n) {
                    data[t * n * n + iy * n + ix] = v;
                }
            }
        }
    }
    DynamicSequence { nx: n, ny: n, nt, data }
}
