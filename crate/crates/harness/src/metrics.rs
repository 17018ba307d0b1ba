//! Error measures.

use crate::HarnessError;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel(a: &[f64], truth: &[f64]) -> Result<f64, HarnessError> {
    if a.len() != truth.len() {
        return Err(HarnessError::Config("length mismatch in error measure".into()));
    }
    let t = norm(truth);
    if t == 0.0 {
        return Err(HarnessError::Config("reference has zero norm".into()));
    }
    let d: Vec<f64> = a.iter().zip(truth).map(|(x, y)| x - y).collect();
    Ok(norm(&d) / t)
}

/// `‖u - u_true‖ / ‖u_true‖`
pub fn rre(u: &[f64], truth: &[f64]) -> Result<f64, HarnessError> {
    rel(u, truth)
}

/// `‖p - p_true‖ / ‖p_true‖`
pub fn param_err(p: &[f64], truth: &[f64]) -> Result<f64, HarnessError> {
    rel(p, truth)
}

/// `‖p - p_true‖` in the parameter's own units.
pub fn param_abs_err(p: &[f64], truth: &[f64]) -> f64 {
    norm(&p.iter().zip(truth).map(|(x, y)| x - y).collect::<Vec<_>>())
}
