//! Additive white Gaussian noise scaled to an exact relative level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct Noisy {
    pub data: Vec<f64>,
    /// Per-entry standard deviation implied by the realized norm.
    pub sigma: f64,
    /// Exact `‖e‖`.
    pub noise_norm: f64,
}

/// Adds `e` with `‖e‖ = level · ‖data‖`.
pub fn add_noise(data: &[f64], level: f64, seed: u64) -> Noisy {
    let dn = data.iter().map(|v| v * v).sum::<f64>().sqrt();
    if level <= 0.0 || dn == 0.0 || data.is_empty() {
        return Noisy { data: data.to_vec(), sigma: 0.0, noise_norm: 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..data.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = level * dn / en;
    let noisy = data.iter().zip(&e).map(|(d, x)| d + scale * x).collect();
    let noise_norm = level * dn;
    Noisy { data: noisy, sigma: noise_norm / (data.len() as f64).sqrt(), noise_norm }
}
