//! Joint reconstruction of the image and geometry parameters. Outer
//! iterations alternate a recycled MM-GKS image solve under the current
//! operator with a damped Gauss-Newton update of `p`, either on the data
//! misfit at a fixed image (alternating minimization) or on the
//! projected objective with the image eliminated (variable projection).

use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::Diagnostics;
use crate::error::{arg_err, dim_err, Result};
use crate::linalg::{dot, golub_kahan, norm2, relative_change, solve_spd, Basis, DenseMatrix, ReducedSystem};
use crate::mmgks::{Penalty, RegParamPolicy, SolverState};
use crate::operators::{LinearOperator, ParamDerivative, ParametricFamily};
use crate::recycling::{run_cycles, RecycleWindow, RmmgksConfig};

/// Armijo backtracking settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub c1: f64,
    pub beta: f64,
    pub alpha0: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { c1: 1e-4, beta: 0.5, alpha0: 1.0, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonConfig {
    pub line_search: LineSearchConfig,
    pub max_iter: usize,
    /// Stop once `‖Δp‖` drops below this.
    pub tol_p: f64,
    /// Fixed damping `µ`; `None` uses `1e-6 · tr(JᵀJ) / n_p`.
    pub damping: Option<f64>,
}

impl Default for GaussNewtonConfig {
    fn default() -> Self {
        Self { line_search: LineSearchConfig::default(), max_iter: 5, tol_p: 1e-4, damping: None }
    }
}

/// One Gauss-Newton step as taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStep {
    pub alpha: f64,
    pub f_before: f64,
    pub f_after: f64,
    /// `gᵀd` for the undamped-by-α direction.
    pub directional: f64,
    pub grad_norm: f64,
    pub dir_norm: f64,
    pub mu: f64,
    pub exhausted: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamUpdate {
    pub p: Vec<f64>,
    pub steps: Vec<ParamStep>,
    pub diagnostics: Diagnostics,
}

/// Least-squares model `f(p) = ½‖ρ(p)‖²` seen by the Gauss-Newton loop.
trait GnModel {
    fn value(&mut self, p: &[f64]) -> Result<f64>;
    /// Residual `ρ(p)` and Jacobian `∂ρ/∂p`.
    fn linearize(&mut self, p: &[f64]) -> Result<(Vec<f64>, DenseMatrix)>;
}

pub(crate) fn clamp_to_box(p: &mut [f64], bounds: Option<&[(f64, f64)]>) -> bool {
    let mut hit = false;
    if let Some(bx) = bounds {
        for (v, (lo, hi)) in p.iter_mut().zip(bx) {
            if *v < *lo {
                *v = *lo;
                hit = true;
            } else if *v > *hi {
                *v = *hi;
                hit = true;
            }
        }
    }
    hit
}

fn gauss_newton(
    model: &mut dyn GnModel,
    p0: &[f64],
    bounds: Option<&[(f64, f64)]>,
    cfg: &GaussNewtonConfig,
) -> Result<ParamUpdate> {
    if let Some(b) = bounds {
        if b.len() != p0.len() {
            return dim_err("parameter box has the wrong length");
        }
    }
    let ls = cfg.line_search;
    let mut p = p0.to_vec();
    let mut steps = Vec::new();
    let mut diagnostics = Diagnostics::default();
    for _ in 0..cfg.max_iter {
        let (rho, jac) = model.linearize(&p)?;
        let f = 0.5 * dot(&rho, &rho);
        let g = jac.tr_mul_vec(&rho);
        let gn = norm2(&g);
        if gn == 0.0 {
            break;
        }
        let mut m = jac.tr_matmul(&jac);
        let np = p.len();
        let trace: f64 = (0..np).map(|i| m.get(i, i)).sum();
        let mu = cfg.damping.unwrap_or(1e-6 * trace / np as f64).max(f64::MIN_POSITIVE * 1e10).max(1e-300);
        for i in 0..np {
            m.set(i, i, m.get(i, i) + mu);
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let Some(d) = solve_spd(&m, &neg_g) else {
            return Err(crate::Error::NonFinite("Gauss-Newton system"));
        };
        let gd = dot(&g, &d);
        let mut alpha = ls.alpha0;
        let mut accepted = None;
        for _ in 0..=ls.max_backtracks {
            let mut trial: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let clamped = clamp_to_box(&mut trial, bounds);
            let actual: Vec<f64> = trial.iter().zip(&p).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &actual);
            if let Ok(ft) = model.value(&trial) {
                if ft.is_finite() && ft <= f + ls.c1 * slope && slope < 0.0 {
                    accepted = Some((trial, ft, clamped));
                    break;
                }
            }
            alpha *= ls.beta;
        }
        let mut step = ParamStep {
            alpha: 0.0,
            f_before: f,
            f_after: f,
            directional: gd,
            grad_norm: gn,
            dir_norm: norm2(&d),
            mu,
            exhausted: false,
            clamped: false,
        };
        match accepted {
            None => {
                step.exhausted = true;
                diagnostics.line_search_exhausted += 1;
                steps.push(step);
                break;
            }
            Some((trial, ft, clamped)) => {
                let dp = relative_step(&trial, &p);
                step.alpha = alpha;
                step.f_after = ft;
                step.clamped = clamped;
                if clamped {
                    diagnostics.param_clamped += 1;
                }
                steps.push(step);
                p = trial;
                if dp < cfg.tol_p {
                    break;
                }
            }
        }
    }
    Ok(ParamUpdate { p, steps, diagnostics })
}

fn relative_step(a: &[f64], b: &[f64]) -> f64 {
    norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

struct AltMinModel<'a, F: ParametricFamily> {
    family: &'a F,
    u: &'a [f64],
    b: &'a [f64],
}

impl<F: ParametricFamily> GnModel for AltMinModel<'_, F> {
    fn value(&mut self, p: &[f64]) -> Result<f64> {
        let hu = self.family.build(p)?.apply(self.u);
        Ok(0.5 * hu.iter().zip(self.b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
    }

    fn linearize(&mut self, p: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
        let hu = self.family.build(p)?.apply(self.u);
        let r: Vec<f64> = hu.iter().zip(self.b).map(|(x, y)| x - y).collect();
        let mut jac = DenseMatrix::with_capacity(r.len(), p.len());
        for i in 0..p.len() {
            jac.push_column(&ParamDerivative::new(self.family, p, i)?.apply(self.u));
        }
        Ok((r, jac))
    }
}

/// Damped Gauss-Newton on `½‖H(p)u - b‖²` with `u` fixed.
pub fn update_param_altmin<F: ParametricFamily>(
    family: &F,
    u: &[f64],
    b: &[f64],
    p0: &[f64],
    bounds: Option<&[(f64, f64)]>,
    cfg: &GaussNewtonConfig,
) -> Result<ParamUpdate> {
    if p0.len() != family.n_params() {
        return dim_err("parameter vector length does not match the family");
    }
    gauss_newton(&mut AltMinModel { family, u, b }, p0, bounds, cfg)
}

/// Projected image and residuals at `p` for a fixed basis and weights.
#[derive(Debug, Clone)]
pub struct VarproEval {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    /// `H(p) u - b`
    pub r: Vec<f64>,
    /// `P Ψ u`
    pub s: Vec<f64>,
    /// `½‖r‖² + (λ/2)‖s‖²`
    pub f: f64,
    /// `H(p) V`
    pub a: DenseMatrix,
}

/// `y(p) = argmin ½‖H(p)Vy - b‖² + (λ/2)‖P Ψ V y‖²`, `u(p) = V y(p)`.
/// `pv` is `P Ψ V`.
pub fn varpro_inner_solve<F: ParametricFamily>(
    family: &F,
    p: &[f64],
    basis: &Basis,
    pv: &DenseMatrix,
    b: &[f64],
    lambda: f64,
) -> Result<VarproEval> {
    let op = family.build(p)?;
    let mut a = DenseMatrix::with_capacity(op.rows(), basis.width());
    for j in 0..basis.width() {
        a.push_column(&op.apply(basis.column(j)));
    }
    let sys = ReducedSystem::from_images(&a, pv, b)?;
    let y = sys.solve(lambda)?.z;
    let u = basis.combine(&y);
    let r: Vec<f64> = a.mul_vec(&y).iter().zip(b).map(|(x, z)| x - z).collect();
    let s = pv.mul_vec(&y);
    let f = 0.5 * dot(&r, &r) + 0.5 * lambda * dot(&s, &s);
    Ok(VarproEval { y, u, r, s, f, a })
}

/// Sensitivities of the projected solution.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    /// `∂y/∂p_j` as columns.
    pub eta: DenseMatrix,
    /// `∂r/∂p_j`
    pub j_r: DenseMatrix,
    /// `∂s/∂p_j`
    pub j_s: DenseMatrix,
}

impl Sensitivity {
    /// `∂u/∂p_j = V η_j`
    pub fn du(&self, basis: &Basis, j: usize) -> Vec<f64> {
        basis.combine(self.eta.column(j))
    }
}

pub fn varpro_sensitivity<F: ParametricFamily>(
    family: &F,
    p: &[f64],
    eval: &VarproEval,
    basis: &Basis,
    pv: &DenseMatrix,
    lambda: f64,
) -> Result<Sensitivity> {
    let k = basis.width();
    let mut m = eval.a.tr_matmul(&eval.a);
    let bb = pv.tr_matmul(pv);
    for j in 0..k {
        for i in 0..k {
            m.set(i, j, m.get(i, j) + lambda * bb.get(i, j));
        }
    }
    let mut eta = DenseMatrix::with_capacity(k, p.len());
    let mut j_r = DenseMatrix::with_capacity(eval.r.len(), p.len());
    let mut j_s = DenseMatrix::with_capacity(eval.s.len(), p.len());
    for i in 0..p.len() {
        let d = ParamDerivative::new(family, p, i)?;
        let du = d.apply(&eval.u);
        let mut c = basis.coefficients(&d.adjoint(&eval.r));
        let atd = eval.a.tr_mul_vec(&du);
        for (ci, ai) in c.iter_mut().zip(&atd) {
            *ci = -(*ci + ai);
        }
        let e = solve_with_ridge(&m, &c)?;
        let mut col = du;
        crate::linalg::axpy(1.0, &eval.a.mul_vec(&e), &mut col);
        j_r.push_column(&col);
        j_s.push_column(&pv.mul_vec(&e));
        eta.push_column(&e);
    }
    Ok(Sensitivity { eta, j_r, j_s })
}

fn solve_with_ridge(m: &DenseMatrix, c: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = solve_spd(m, c) {
        return Ok(x);
    }
    let n = m.rows();
    let scale = (0..n).map(|i| m.get(i, i).abs()).fold(0.0, f64::max).max(1e-300);
    let mut mm = m.clone();
    for i in 0..n {
        mm.set(i, i, mm.get(i, i) + 1e-12 * scale);
    }
    solve_spd(&mm, c).ok_or(crate::Error::NonFinite("sensitivity system"))
}

struct VarproModel<'a, F: ParametricFamily> {
    family: &'a F,
    basis: &'a Basis,
    pv: &'a DenseMatrix,
    b: &'a [f64],
    lambda: f64,
}

impl<F: ParametricFamily> GnModel for VarproModel<'_, F> {
    fn value(&mut self, p: &[f64]) -> Result<f64> {
        Ok(varpro_inner_solve(self.family, p, self.basis, self.pv, self.b, self.lambda)?.f)
    }

    fn linearize(&mut self, p: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
        let ev = varpro_inner_solve(self.family, p, self.basis, self.pv, self.b, self.lambda)?;
        let sens = varpro_sensitivity(self.family, p, &ev, self.basis, self.pv, self.lambda)?;
        let sl = crate::math::sqrt(self.lambda);
        let mut rho = ev.r.clone();
        rho.extend(ev.s.iter().map(|v| sl * v));
        let jac = DenseMatrix::vstack(&sens.j_r, &sens.j_s.scaled(sl));
        Ok((rho, jac))
    }
}

/// Damped Gauss-Newton on the projected objective
/// `½‖H(p)u(p) - b‖² + (λ/2)‖PΨu(p)‖²`.
pub fn update_param_varpro<F: ParametricFamily>(
    family: &F,
    basis: &Basis,
    pv: &DenseMatrix,
    b: &[f64],
    p0: &[f64],
    bounds: Option<&[(f64, f64)]>,
    lambda: f64,
    cfg: &GaussNewtonConfig,
) -> Result<ParamUpdate> {
    if p0.len() != family.n_params() {
        return dim_err("parameter vector length does not match the family");
    }
    if !(lambda >= 0.0) {
        return arg_err("regularization parameter must be nonnegative");
    }
    gauss_newton(&mut VarproModel { family, basis, pv, b, lambda }, p0, bounds, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridInit {
    pub p: Vec<f64>,
    /// Projected residual norm for every candidate.
    pub residuals: Vec<f64>,
}

/// Picks the candidate whose operator best fits `b` over an `ell0`-column
/// Golub-Kahan space built at `nominal`. Ties go to the smallest `‖p‖`.
pub fn grid_init<F: ParametricFamily>(
    family: &F,
    b: &[f64],
    candidates: &[Vec<f64>],
    ell0: usize,
    nominal: &[f64],
) -> Result<GridInit> {
    if candidates.is_empty() {
        return arg_err("grid search needs at least one candidate");
    }
    let v = golub_kahan(&family.build(nominal)?, b, ell0)?;
    let mut residuals = Vec::with_capacity(candidates.len());
    for c in candidates {
        let op = family.build(c)?;
        let mut a = DenseMatrix::with_capacity(op.rows(), v.width());
        for j in 0..v.width() {
            a.push_column(&op.apply(v.column(j)));
        }
        let empty = DenseMatrix::zeros(0, v.width());
        let sys = ReducedSystem::from_images(&a, &empty, b)?;
        residuals.push(crate::math::sqrt(sys.offset_sq));
    }
    let mut best = 0;
    for i in 1..candidates.len() {
        let (ri, rb) = (residuals[i], residuals[best]);
        let tie = (ri - rb).abs() <= 1e-12 * rb.max(ri);
        if (!tie && ri < rb) || (tie && norm2(&candidates[i]) < norm2(&candidates[best])) {
            best = i;
        }
    }
    Ok(GridInit { p: candidates[best].clone(), residuals })
}

/// Source of the regularization operator for the outer loop.
pub trait RegularizerSource {
    type Op: LinearOperator;
    fn operator(&self) -> &Self::Op;
    /// Called before outer iteration `k` with the current image. Returns
    /// `true` when the operator changed.
    fn refresh(&mut self, k: usize, u: &[f64]) -> Result<bool>;
}

/// Regularizer that never changes.
#[derive(Debug, Clone)]
pub struct FixedRegularizer<O>(pub O);

impl<O: LinearOperator> RegularizerSource for FixedRegularizer<O> {
    type Op = O;
    fn operator(&self) -> &O {
        &self.0
    }
    fn refresh(&mut self, _k: usize, _u: &[f64]) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamUpdateMode {
    AltMin,
    VarPro,
    Frozen,
}

/// Auxiliary solve with `λ_hi = min(factor · λ, cap)` whose image feeds the
/// parameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighReg {
    pub factor: f64,
    pub cap: f64,
    pub cycles: usize,
}

impl Default for HighReg {
    fn default() -> Self {
        Self { factor: 100.0, cap: 1e12, cycles: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlConfig {
    pub mode: ParamUpdateMode,
    pub window: RecycleWindow,
    pub penalty: Penalty,
    pub policy: RegParamPolicy,
    /// Relative-change tolerance inside the image solves.
    pub tol1: f64,
    /// Enlarge/compress cycles per image solve.
    pub inner_cycles: usize,
    pub solves_per_cycle: Option<usize>,
    pub high_reg: Option<HighReg>,
    pub max_outer: usize,
    pub tol_outer: f64,
    pub tol_p: f64,
    pub gauss_newton: GaussNewtonConfig,
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Refresh the regularizer before every outer iteration, not only the
    /// first.
    pub refresh_each_outer: bool,
}

impl NlConfig {
    /// Defaults: auxiliary high-regularization solve on for alternating
    /// minimization only, one cycle per image solve, 50 outer iterations.
    pub fn new(mode: ParamUpdateMode, window: RecycleWindow, epsilon: f64, policy: RegParamPolicy) -> Self {
        Self {
            mode,
            window,
            penalty: Penalty::Smoothed { epsilon },
            policy,
            tol1: 1e-6,
            inner_cycles: 1,
            solves_per_cycle: None,
            high_reg: if mode == ParamUpdateMode::AltMin { Some(HighReg::default()) } else { None },
            max_outer: 50,
            tol_outer: 1e-3,
            tol_p: 1e-4,
            gauss_newton: GaussNewtonConfig::default(),
            bounds: None,
            refresh_each_outer: true,
        }
    }

    pub fn rmmgks(&self, policy: RegParamPolicy, cycles: usize) -> RmmgksConfig {
        RmmgksConfig {
            window: self.window,
            penalty: self.penalty,
            tol1: self.tol1,
            policy,
            max_cycles: cycles,
            solves_per_cycle: self.solves_per_cycle,
        }
    }
}

/// Starting point of a run: image, parameters and optional warm basis.
#[derive(Debug, Clone)]
pub struct NlStart {
    pub u0: Vec<f64>,
    pub p0: Vec<f64>,
    pub basis: Option<Basis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub k: usize,
    /// Pass and block index; both zero for a single-block run.
    pub pass: usize,
    pub block: usize,
    pub lambda: f64,
    /// `J_ε` at the new image under the operator it was solved with.
    pub objective: f64,
    pub rre: Option<f64>,
    /// Parameters after this iteration's update.
    pub p: Vec<f64>,
    pub dp_norm: f64,
    /// Last accepted line-search step, if any.
    pub alpha: Option<f64>,
    pub width: usize,
    pub rel_change: f64,
    pub solves: usize,
}

#[derive(Debug, Clone)]
pub struct NlOutput {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Compressed basis, without the final augmentation.
    pub basis: Basis,
    pub lambda: f64,
    pub history: Vec<OuterRecord>,
    pub param_steps: Vec<ParamStep>,
    pub converged: bool,
    pub passes: usize,
    pub peak_width: usize,
    pub peak_aux_width: usize,
    pub diagnostics: Diagnostics,
    pub state: SolverState,
}

fn rre(u: &[f64], truth: Option<&[f64]>) -> Option<f64> {
    truth.map(|t| relative_change(u, t))
}

/// One block of data for the outer loop.
pub(crate) struct BlockData<'a, F> {
    pub family: &'a F,
    pub b: &'a [f64],
    pub policy: RegParamPolicy,
}

/// Outer loop shared by the static, streaming and dynamic drivers.
pub fn nl_drive<F: ParametricFamily, R: RegularizerSource>(
    family: &F,
    reg_src: &mut R,
    b: &[f64],
    start: NlStart,
    cfg: &NlConfig,
    truth: Option<&[f64]>,
) -> Result<NlOutput> {
    nl_drive_observed(family, reg_src, b, start, cfg, truth, &mut |_, _| {})
}

/// [`nl_drive`] with a callback after every outer iteration, given the
/// record and the current image.
pub fn nl_drive_observed<F: ParametricFamily, R: RegularizerSource>(
    family: &F,
    reg_src: &mut R,
    b: &[f64],
    start: NlStart,
    cfg: &NlConfig,
    truth: Option<&[f64]>,
    observe: &mut dyn FnMut(&OuterRecord, &[f64]),
) -> Result<NlOutput> {
    let blocks = [BlockData { family, b, policy: cfg.policy }];
    drive_blocks(&blocks, reg_src, start, cfg, cfg.max_outer, truth, observe)
}

/// Sweeps the blocks in order, one outer step per block, until the image
/// and parameters stop changing between passes. With a single block a pass
/// is one outer iteration.
pub(crate) fn drive_blocks<F: ParametricFamily, R: RegularizerSource>(
    blocks: &[BlockData<'_, F>],
    reg_src: &mut R,
    start: NlStart,
    cfg: &NlConfig,
    max_passes: usize,
    truth: Option<&[f64]>,
    observe: &mut dyn FnMut(&OuterRecord, &[f64]),
) -> Result<NlOutput> {
    if blocks.is_empty() {
        return arg_err("no data blocks");
    }
    if max_passes == 0 {
        return arg_err("at least one pass is required");
    }
    if blocks.iter().any(|blk| blk.family.n_params() != start.p0.len()) {
        return dim_err("initial parameters do not match the family");
    }
    let single = blocks.len() == 1;
    let mut p = start.p0;
    if clamp_to_box(&mut p, cfg.bounds.as_deref()) {
        return arg_err("initial parameters lie outside the admissible box");
    }
    let mut op = blocks[0].family.build(&p)?;
    reg_src.refresh(0, &start.u0)?;
    let mut state = match start.basis {
        Some(v) => SolverState::new(&op, reg_src.operator(), blocks[0].b, start.u0, v, cfg.penalty)?,
        None => SolverState::seeded(&op, reg_src.operator(), blocks[0].b, start.u0, cfg.window.k_min, cfg.penalty)?,
    };
    let mut history = Vec::new();
    let mut param_steps = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut peak_aux_width = 0;
    let mut converged = false;
    let mut passes = 0;
    let mut k = 0;
    let mut rebuild = false;
    'passes: for pass in 0..max_passes {
        passes = pass + 1;
        let u_pass = state.u.clone();
        let p_pass = p.clone();
        for (j, blk) in blocks.iter().enumerate() {
            if k > 0 {
                let refreshed = cfg.refresh_each_outer && reg_src.refresh(k, &state.u)?;
                if rebuild || !single {
                    op = blk.family.build(&p)?;
                    state.rebind(&op, reg_src.operator(), blk.b)?;
                } else if refreshed {
                    state.rebind(&op, reg_src.operator(), blk.b)?;
                }
            }
            let b = blk.b;
            let u_prev = state.u.clone();
            let primary = cfg.rmmgks(blk.policy, cfg.inner_cycles);
            let cycles = run_cycles(&mut state, &op, reg_src.operator(), b, &primary)?;
            let lambda = state.lambda;
            let lam_hi = |h: &HighReg| (h.factor * lambda).min(h.cap);
            let update = match cfg.mode {
                ParamUpdateMode::Frozen => None,
                ParamUpdateMode::AltMin => {
                    let u_hat = match &cfg.high_reg {
                        Some(h) => {
                            let mut aux = state.clone();
                            run_cycles(&mut aux, &op, reg_src.operator(), b, &cfg.rmmgks(RegParamPolicy::Fixed(lam_hi(h)), h.cycles))?;
                            peak_aux_width = peak_aux_width.max(aux.peak_width());
                            aux.u
                        }
                        None => state.u.clone(),
                    };
                    Some(update_param_altmin(blk.family, &u_hat, b, &p, cfg.bounds.as_deref(), &cfg.gauss_newton)?)
                }
                ParamUpdateMode::VarPro => {
                    let lam = cfg.high_reg.as_ref().map(lam_hi).unwrap_or(lambda);
                    let pv = state.rv.scale_rows(&state.weights.entries);
                    Some(update_param_varpro(blk.family, &state.basis, &pv, b, &p, cfg.bounds.as_deref(), lam, &cfg.gauss_newton)?)
                }
            };
            let (p_new, alpha) = match update {
                Some(upd) => {
                    diagnostics.merge(&upd.diagnostics);
                    let alpha = upd.steps.iter().rev().find(|s| s.alpha > 0.0).map(|s| s.alpha);
                    param_steps.extend(upd.steps);
                    (upd.p, alpha)
                }
                None => (p.clone(), None),
            };
            let dp_norm = relative_step(&p_new, &p);
            let rel_change = relative_change(&state.u, &u_prev);
            history.push(OuterRecord {
                k,
                pass,
                block: j,
                lambda,
                objective: state.objective_history.last().copied().unwrap_or(f64::NAN),
                rre: rre(&state.u, truth),
                p: p_new.clone(),
                dp_norm,
                alpha,
                width: cycles.iter().map(|c| c.width).max().unwrap_or(state.width()),
                rel_change,
                solves: cycles.iter().map(|c| c.solves).sum(),
            });
            observe(history.last().unwrap(), &state.u);
            k += 1;
            let last = j + 1 == blocks.len();
            if last && relative_change(&state.u, &u_pass) < cfg.tol_outer && relative_step(&p_new, &p_pass) < cfg.tol_p {
                converged = true;
                p = p_new;
                break 'passes;
            }
            if last && pass + 1 == max_passes {
                p = p_new;
                break 'passes;
            }
            rebuild = p_new.iter().zip(&p).any(|(a, c)| a.to_bits() != c.to_bits());
            p = p_new;
            // Between blocks only the compressed basis is carried; the next
            // block's own residual drives its expansion.
            if single && !state.expand(&op, reg_src.operator()) && !rebuild {
                converged = true;
                break 'passes;
            }
        }
    }
    diagnostics.merge(&state.diagnostics);
    Ok(NlOutput {
        u: state.u.clone(),
        p,
        basis: state.basis.clone(),
        lambda: state.lambda,
        history,
        param_steps,
        converged,
        passes,
        peak_width: state.peak_width(),
        peak_aux_width,
        diagnostics,
        state,
    })
}

/// Joint image and parameter reconstruction with a fixed regularizer.
pub fn nl_rmmgks<F: ParametricFamily, O: LinearOperator>(
    family: &F,
    reg: O,
    b: &[f64],
    start: NlStart,
    cfg: &NlConfig,
    truth: Option<&[f64]>,
) -> Result<NlOutput> {
    nl_drive(family, &mut FixedRegularizer(reg), b, start, cfg, truth)
}

pub(crate) fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}
