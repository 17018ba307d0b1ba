//! Bounded-memory restarting of MM-GKS: the search space grows from `k_min`
//! to at most `k_max + 1` columns, then is compressed back to `k_min`
//! columns that keep the dominant right singular directions of the stacked
//! projected matrix and the current iterate.

use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::linalg::{norm2, relative_change, truncated_svd, Basis, DenseMatrix};
use crate::math::sqrt;
use crate::mmgks::{Penalty, RegParamPolicy, SolveReport, SolverState};
use crate::operators::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecycleWindow {
    pub k_min: usize,
    pub k_max: usize,
}

impl RecycleWindow {
    pub fn new(k_min: usize, k_max: usize) -> Result<Self> {
        if k_min < 2 || k_max <= k_min {
            return arg_err("recycling window needs 2 <= k_min < k_max");
        }
        Ok(Self { k_min, k_max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnlargeReport {
    pub solves: usize,
    /// Stopped on the relative-change tolerance.
    pub early_exit: bool,
    /// Stopped because the gradient could not extend the space.
    pub stalled: bool,
    pub last: SolveReport,
}

/// One projected solve, then up to `steps` expand-and-solve rounds, stopping
/// early once the iterate moves less than `tol1` (relative). The first
/// expansion always happens.
pub fn enlarge(
    state: &mut SolverState,
    h: &dyn LinearOperator,
    reg: &dyn LinearOperator,
    b: &[f64],
    steps: usize,
    tol1: f64,
    policy: RegParamPolicy,
) -> Result<EnlargeReport> {
    let mut prev = state.u.clone();
    let mut last = state.solve_reduced(h, reg, b, policy)?;
    let mut rep = EnlargeReport { solves: 1, early_exit: false, stalled: false, last };
    for i in 0..steps {
        if i > 0 && relative_change(&state.u, &prev) <= tol1 {
            rep.early_exit = true;
            break;
        }
        if !state.expand(h, reg) {
            rep.stalled = true;
            break;
        }
        prev.copy_from_slice(&state.u);
        last = state.solve_reduced(h, reg, b, policy)?;
        rep.solves += 1;
        rep.last = last;
    }
    Ok(rep)
}

/// Compressed basis `V W'` and the transform `W'`.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub basis: Basis,
    pub transform: DenseMatrix,
}

/// Keeps the top `k_min - 1` right singular vectors of `[R_A; √λ R_Ψ]` plus
/// the component of the iterate's coefficients orthogonal to them. If that
/// component vanishes the next singular vector is kept instead.
pub fn compress(
    v: &Basis,
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    lambda: f64,
    u: &[f64],
    k_min: usize,
) -> Result<Compressed> {
    let z = v.coefficients(u);
    let w = compress_transform(r_a, r_psi, lambda, &z, k_min)?;
    Ok(Compressed { basis: v.transform(&w), transform: w })
}

fn compress_transform(
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    lambda: f64,
    z: &[f64],
    k_min: usize,
) -> Result<DenseMatrix> {
    if k_min == 0 {
        return arg_err("k_min must be positive");
    }
    let k = r_a.cols();
    let stacked = DenseMatrix::vstack(r_a, &r_psi.scaled(sqrt(lambda)));
    let svd = truncated_svd(&stacked, k_min);
    let keep = (k_min - 1).min(svd.retained());
    let mut w = Basis::from_orthonormal(svd.v.leading_columns(keep));
    let zn = norm2(z);
    let mut y = z.to_vec();
    w.orthogonalize(&mut y);
    if zn > 0.0 && norm2(&y) > 1e-12 * zn {
        w.push_direction(&y, 0.0);
    } else if svd.retained() > keep {
        w.push_direction(svd.v.column(keep), 0.0);
    }
    let mut out = w.as_matrix().clone();
    if out.rows() != k {
        out = DenseMatrix::zeros(k, 0);
    }
    Ok(out)
}

/// Compresses the state's space to `k_min` columns using its latest solve.
/// Returns `false` when the space is already small enough.
pub fn compress_state(state: &mut SolverState, k_min: usize) -> Result<bool> {
    if state.width() <= k_min {
        return Ok(false);
    }
    let Some((sys, z)) = state.last_reduced() else {
        return arg_err("compression needs a projected solve on the current basis");
    };
    let w = compress_transform(&sys.r_a, &sys.r_psi, state.lambda, z, k_min)?;
    state.transform_basis(&w);
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmmgksConfig {
    pub window: RecycleWindow,
    pub penalty: Penalty,
    /// Relative-change tolerance, both inside Enlarge and between cycles.
    pub tol1: f64,
    pub policy: RegParamPolicy,
    /// Enlarge/compress cycles.
    pub max_cycles: usize,
    /// Cap on projected solves per cycle; `None` uses the whole window.
    pub solves_per_cycle: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub lambda: f64,
    pub objective: f64,
    pub solves: usize,
    /// Width before compression.
    pub width: usize,
    pub rel_change: f64,
}

/// Runs enlarge/compress cycles on `state`. Every cycle after the first
/// starts by appending the gradient at the current iterate. The state ends
/// compressed, without a trailing augmentation.
pub fn run_cycles(
    state: &mut SolverState,
    h: &dyn LinearOperator,
    reg: &dyn LinearOperator,
    b: &[f64],
    cfg: &RmmgksConfig,
) -> Result<Vec<CycleRecord>> {
    let RecycleWindow { k_min, k_max } = cfg.window;
    let mut steps = k_max - k_min;
    if let Some(m) = cfg.solves_per_cycle {
        steps = steps.min(m.max(1) - 1);
    }
    let mut out = Vec::new();
    for c in 0..cfg.max_cycles {
        if c > 0 && !state.expand(h, reg) {
            break;
        }
        let start = state.u.clone();
        let rep = enlarge(state, h, reg, b, steps, cfg.tol1, cfg.policy)?;
        let width = state.width();
        compress_state(state, k_min)?;
        let rel_change = relative_change(&state.u, &start);
        out.push(CycleRecord { lambda: rep.last.lambda, objective: rep.last.objective, solves: rep.solves, width, rel_change });
        if rel_change < cfg.tol1 {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RmmgksOutput {
    pub u: Vec<f64>,
    /// Compressed `k_min`-column basis for warm starts.
    pub basis: Basis,
    pub lambda: f64,
    pub cycles: Vec<CycleRecord>,
    pub state: SolverState,
}

/// Recycled MM-GKS from `u0`. Without `v0` the space is seeded with `k_min`
/// Golub-Kahan vectors.
pub fn rmmgks(
    h: &dyn LinearOperator,
    reg: &dyn LinearOperator,
    b: &[f64],
    u0: Vec<f64>,
    v0: Option<Basis>,
    cfg: &RmmgksConfig,
) -> Result<RmmgksOutput> {
    let mut state = match v0 {
        Some(v) => SolverState::new(h, reg, b, u0, v, cfg.penalty)?,
        None => SolverState::seeded(h, reg, b, u0, cfg.window.k_min, cfg.penalty)?,
    };
    let cycles = run_cycles(&mut state, h, reg, b, cfg)?;
    Ok(RmmgksOutput { u: state.u.clone(), basis: state.basis.clone(), lambda: state.lambda, cycles, state })
}
