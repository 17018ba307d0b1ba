//! Acceptance run. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::io::Write;
use std::time::Instant;

use nlgks::config::ExperimentConfig;
use nlgks::noise::add_noise;
use nlgks::output::write_metrics;
use nlgks::phantom::shepp_logan;
use nlgks::presets::{test1_desk, test2_desk, test3_desk, test4_desk};
use nlgks::runner::{run_experiment, RunOutput};
use nlgks_core::dynamic::{build_theta, dynamic_nl_rmmgks, dynamic_rmmgks, optical_flow_theta, BlockDiagonalFamily, DynamicConfig, TemporalStrategy};
use nlgks_core::linalg::{dot, golub_kahan, norm2, relative_change, DenseMatrix};
use nlgks_core::mmgks::{compute_weights, majorant_value, mmgks, smoothed_objective, Penalty, RegParamPolicy};
use nlgks_core::nonlinear::{
    nl_drive_observed, nl_rmmgks, update_param_altmin, update_param_varpro, varpro_inner_solve, varpro_sensitivity,
    FixedRegularizer, GaussNewtonConfig, NlConfig, NlStart, ParamStep, ParamUpdateMode,
};
use nlgks_core::operators::ct::{FanBeamFamily, FanBeamGeometry};
use nlgks_core::operators::motion::{Displacement, VelocityField, Warp};
use nlgks_core::operators::pat::{CircularArrayGeometry, CircularMeanFamily};
use nlgks_core::operators::reg::{FiniteDifferences, RegKind, RegOperator};
use nlgks_core::operators::{adjoint_mismatch, estimate_norm, BlockedFamily, LinearOperator, ParametricFamily, ScalingFamily};
use nlgks_core::recycling::{rmmgks, RecycleWindow, RmmgksConfig};
use nlgks_core::streaming::{s_nl_rmmgks, s_rmmgks, BlockPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Fixed-λ toy for the descent and memory runs.
const TOY_LAMBDA: f64 = 0.005;
const TOY_EPSILON: f64 = 1e-3;

// Pinned tolerances.
const TANGENT_VALUE_TOL: f64 = 1e-12;
const TANGENT_GRAD_TOL: f64 = 1e-5;
const DOMINATION_TOL: f64 = 1e-12;
const DESCENT_TOL: f64 = 1e-12;
const REDUCTION_TOL: f64 = 1e-12;
const GN_PARAM_TOL: f64 = 1e-8;
const GN_GRAD_FLOOR: f64 = 1e-12;
const ARMIJO_C1: f64 = 1e-4;
const VARPRO_TOL: f64 = 1e-4;
const ADJOINT_TOL: f64 = 1e-8;
const NULLSPACE_TOL: f64 = 1e-12;
const T1_PARAM_ABS: f64 = 1e-2;
const T1_RRE_SLACK: f64 = 0.02;
const T3_PARAM_ABS: f64 = 2e-2;
const T4_KMAX_GAP: f64 = 0.05;
const T2_PARAM_REL: f64 = 5e-2;
const T2_EXCURSION: f64 = 0.5;

struct Verdicts {
    all: Vec<(usize, bool)>,
}

impl Verdicts {
    fn record(&mut self, id: usize, name: &str, ok: bool, detail: String, secs: f64) {
        let tag = if ok { "PASS" } else { "FAIL" };
        report(&format!("{tag} [{id:>2}] {name}: {detail} ({secs:.1} s)"));
        self.all.push((id, ok));
    }
}

/// Writes past the test harness's output capture so the verdicts show in
/// plain `cargo test` output.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn ct_family(n: usize, angles: usize, detectors: usize) -> FanBeamFamily {
    let a = (0..angles).map(|i| 180.0 * i as f64 / angles as f64 + 1.3).collect();
    FanBeamFamily::new(FanBeamGeometry::standard(n, a, detectors)).unwrap()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    max_abs_diff(a, b) / scale
}

/// `∇J_ε(u)` assembled directly from the operators.
fn objective_gradient(h: &dyn LinearOperator, reg: &dyn LinearOperator, b: &[f64], u: &[f64], lambda: f64, eps: f64) -> Vec<f64> {
    let mut g = h.adjoint(&sub(&h.apply(u), b));
    let z = reg.apply(u);
    let wz: Vec<f64> = z.iter().map(|t| t / (t * t + eps * eps).sqrt()).collect();
    for (gi, ri) in g.iter_mut().zip(reg.adjoint(&wz)) {
        *gi += lambda * ri;
    }
    g
}

fn majorant_suite(v: &mut Verdicts) {
    let t = Instant::now();
    let n = 16;
    let h = ct_family(n, 20, 23).build(&[0.0]).unwrap();
    let reg = FiniteDifferences::new(RegKind::Spatial2d, n, n, 1).unwrap();
    let truth = shepp_logan(n);
    let b = add_noise(&h.apply(&truth), 0.01, 3).data;
    let (lambda, eps) = (0.05, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_val, mut worst_grad, mut worst_dom) = (0.0f64, 0.0f64, f64::INFINITY);
    let fd_h = 1e-6;
    for _ in 0..50 {
        let anchor: Vec<f64> = truth.iter().zip(gaussian(&mut rng, n * n)).map(|(x, e)| x + 0.2 * e).collect();
        let j = smoothed_objective(&h, &reg, &b, &anchor, lambda, eps);
        let q = majorant_value(&anchor, &anchor, &h, &reg, &b, lambda, eps).unwrap();
        worst_val = worst_val.max((j - q).abs() / j.abs().max(1.0));

        let g = objective_gradient(&h, &reg, &b, &anchor, lambda, eps);
        let mut fd_j = vec![0.0; n * n];
        let mut fd_q = vec![0.0; n * n];
        for i in 0..n * n {
            let mut up = anchor.clone();
            let mut dn = anchor.clone();
            up[i] += fd_h;
            dn[i] -= fd_h;
            fd_j[i] = (smoothed_objective(&h, &reg, &b, &up, lambda, eps) - smoothed_objective(&h, &reg, &b, &dn, lambda, eps)) / (2.0 * fd_h);
            fd_q[i] = (majorant_value(&up, &anchor, &h, &reg, &b, lambda, eps).unwrap()
                - majorant_value(&dn, &anchor, &h, &reg, &b, lambda, eps).unwrap())
                / (2.0 * fd_h);
        }
        let gn = norm2(&g);
        worst_grad = worst_grad.max(norm2(&sub(&fd_j, &g)) / gn).max(norm2(&sub(&fd_q, &g)) / gn);

        for k in 0..100 {
            let scale = 10f64.powf(-3.0 + 4.0 * k as f64 / 99.0);
            let u: Vec<f64> = anchor.iter().zip(gaussian(&mut rng, n * n)).map(|(x, e)| x + scale * e).collect();
            let ju = smoothed_objective(&h, &reg, &b, &u, lambda, eps);
            let qu = majorant_value(&u, &anchor, &h, &reg, &b, lambda, eps).unwrap();
            worst_dom = worst_dom.min((qu - ju) / ju.abs().max(1.0));
        }
    }
    let ok = worst_val < TANGENT_VALUE_TOL && worst_grad < TANGENT_GRAD_TOL && worst_dom >= -DOMINATION_TOL;
    v.record(
        1,
        "majorant tangency and domination",
        ok,
        format!("value gap {worst_val:.2e}, gradient fd rel err {worst_grad:.2e}, min (Q - J) {worst_dom:.2e} over 50x100 probes"),
        t.elapsed().as_secs_f64(),
    );
}

/// Checks `J_k - J_{k+1} >= ‖∇J(u_k)‖² / (2 µ̄)` and monotonicity over the
/// first `count` solves. Returns (violations, smallest slack ratio).
fn descent_check(objective: &[f64], grad_norm: &[f64], mu: f64, count: usize) -> (usize, f64) {
    let mut bad = 0;
    let mut ratio = f64::INFINITY;
    for k in 0..count.min(objective.len()) - 1 {
        let dec = objective[k] - objective[k + 1];
        let bound = grad_norm[k] * grad_norm[k] / (2.0 * mu);
        let tol = DESCENT_TOL * objective[k].abs().max(1.0);
        if objective[k + 1] > objective[k] + tol || dec < bound - tol {
            bad += 1;
        }
        if bound > tol {
            ratio = ratio.min(dec / bound);
        }
    }
    (bad, ratio)
}

fn ct_toy(n: usize) -> (nlgks_core::operators::CsrMatrix, FiniteDifferences, Vec<f64>, Vec<f64>) {
    let h = ct_family(n, 20, 45).build(&[0.0]).unwrap();
    let reg = FiniteDifferences::new(RegKind::Spatial2d, n, n, 1).unwrap();
    let truth = shepp_logan(n);
    let b = add_noise(&h.apply(&truth), 0.01, 5).data;
    (h, reg, b, truth)
}

fn monotone_descent(v: &mut Verdicts) {
    let t = Instant::now();
    let n = 32;
    let (h, reg, b, _) = ct_toy(n);
    let (lambda, eps) = (TOY_LAMBDA, TOY_EPSILON);
    // weights never exceed ε^{-1/2}, so ΨᵀP²Ψ ⪯ ‖Ψ‖²/ε
    let nh = estimate_norm(&h, 300) * 1.01;
    let nr = estimate_norm(&reg, 300) * 1.01;
    let mu = nh * nh + lambda * nr * nr / eps;
    let penalty = Penalty::Smoothed { epsilon: eps };
    let policy = RegParamPolicy::Fixed(lambda);
    let mm = mmgks(&h, &reg, &b, vec![0.0; n * n], 1, 200, penalty, policy).unwrap();
    let (bad_mm, r_mm) = descent_check(&mm.objective_history, &mm.residual_norm_history, mu, 200);
    let cfg = RmmgksConfig {
        window: RecycleWindow::new(5, 25).unwrap(),
        penalty,
        tol1: 0.0,
        policy,
        max_cycles: 10,
        solves_per_cycle: None,
    };
    let rm = rmmgks(&h, &reg, &b, vec![0.0; n * n], None, &cfg).unwrap();
    let (bad_rm, r_rm) = descent_check(&rm.state.objective_history, &rm.state.residual_norm_history, mu, 200);
    let counts = (mm.objective_history.len(), rm.state.objective_history.len());
    let ok = bad_mm == 0 && bad_rm == 0 && counts.0 >= 200 && counts.1 >= 200;
    v.record(
        2,
        "monotone descent with step bound",
        ok,
        format!(
            "MM-GKS {} solves, {bad_mm} violations, min decrease/bound {r_mm:.2}; RMM-GKS {} solves, {bad_rm} violations, min ratio {r_rm:.2}",
            counts.0, counts.1
        ),
        t.elapsed().as_secs_f64(),
    );
}

fn memory_bound(v: &mut Verdicts, desk: &[&RunOutput]) {
    let t = Instant::now();
    let n = 32;
    let (h, reg, b, truth) = ct_toy(n);
    let window = RecycleWindow::new(5, 20).unwrap();
    let cfg = RmmgksConfig {
        window,
        penalty: Penalty::Smoothed { epsilon: TOY_EPSILON },
        tol1: 0.0,
        policy: RegParamPolicy::Fixed(TOY_LAMBDA),
        max_cycles: 32,
        solves_per_cycle: None,
    };
    let rm = rmmgks(&h, &reg, &b, vec![0.0; n * n], None, &cfg).unwrap();
    let solves = rm.state.objective_history.len();
    let cycle_peak = rm.cycles.iter().map(|c| c.width).max().unwrap_or(0);
    let mut ok = solves >= 500 && rm.state.peak_width() <= window.k_max + 1 && cycle_peak <= window.k_max + 1;
    let mut detail = format!("rmmgks {solves} solves peak {} (k_max {})", rm.state.peak_width(), window.k_max);

    let fam = ct_family(n, 20, 45);
    let plan = BlockPlan::new(fam.units(), 3, 2).unwrap();
    let s = s_rmmgks(&fam, &reg, &b, &[0.0], &plan, &cfg, Some(&truth)).unwrap();
    ok &= s.ledger.peak_basis_columns <= window.k_max + 1;
    detail += &format!("; s_rmmgks peak {}", s.ledger.peak_basis_columns);

    let mut nl = NlConfig::new(ParamUpdateMode::AltMin, window, 0.01, RegParamPolicy::Gcv);
    nl.max_outer = 4;
    let start = NlStart { u0: vec![0.0; n * n], p0: vec![0.3], basis: None };
    let s = s_nl_rmmgks(&fam, &mut FixedRegularizer(reg), &b, start, &plan, &nl, 3, Some(&truth)).unwrap();
    ok &= s.ledger.peak_basis_columns <= window.k_max + 1 && s.ledger.peak_aux_basis_columns <= window.k_max + 1;
    detail += &format!("; s_nl_rmmgks peak {}/{} aux", s.ledger.peak_basis_columns, s.ledger.peak_aux_basis_columns);

    let mut worst = 0i64;
    let mut streamed = 0;
    for r in desk.iter().filter(|r| r.config.blocks > 1) {
        let k = r.config.k_max as i64 + 1;
        worst = worst.max(r.summary.peak_basis_columns as i64 - k).max(r.summary.peak_aux_basis_columns as i64 - k);
        streamed += 1;
    }
    ok &= worst <= 0 && streamed > 0;
    detail += &format!("; {streamed} desk streaming runs, max excess over k_max+1 {worst}");
    v.record(3, "peak basis columns <= k_max + 1", ok, detail, t.elapsed().as_secs_f64());
}

fn reductions(v: &mut Verdicts) {
    let t = Instant::now();
    let n = 16;
    let fam = ct_family(n, 24, 23);
    let reg = FiniteDifferences::new(RegKind::Spatial2d, n, n, 1).unwrap();
    let truth = shepp_logan(n);
    let noisy = add_noise(&fam.build(&[0.4]).unwrap().apply(&truth), 0.01, 9);
    let b = noisy.data;
    let window = RecycleWindow::new(4, 10).unwrap();
    let policy = RegParamPolicy::Discrepancy { noise_norm: noisy.noise_norm, tau: 1.01 };

    // (a) frozen parameters against linear RMM-GKS, one outer step per cycle
    let mut cfg = NlConfig::new(ParamUpdateMode::Frozen, window, 0.01, policy);
    cfg.max_outer = 7;
    cfg.tol_outer = 0.0;
    let start = NlStart { u0: vec![0.0; n * n], p0: vec![0.4], basis: None };
    let mut iterates = Vec::new();
    let nl = nl_drive_observed(&fam, &mut FixedRegularizer(reg), &b, start, &cfg, None, &mut |_, u| iterates.push(u.to_vec())).unwrap();
    let op = fam.build(&[0.4]).unwrap();
    let mut gap_a = 0.0f64;
    for (k, u) in iterates.iter().enumerate() {
        let lin = rmmgks(&op, &reg, &b, vec![0.0; n * n], None, &cfg.rmmgks(policy, k + 1)).unwrap();
        gap_a = gap_a.max(rel_max_diff(u, &lin.u));
        if k + 1 == iterates.len() {
            gap_a = gap_a.max(rel_max_diff(&nl.state.objective_history, &lin.state.objective_history));
        }
    }
    let ok_a = gap_a < REDUCTION_TOL && iterates.len() == cfg.max_outer;

    // (b) one streaming block against the plain outer loop
    let mut cfg = NlConfig::new(ParamUpdateMode::AltMin, window, 0.01, policy);
    cfg.max_outer = 6;
    let start = NlStart { u0: vec![0.0; n * n], p0: vec![0.0], basis: None };
    let nl = nl_rmmgks(&fam, reg, &b, start.clone(), &cfg, Some(&truth)).unwrap();
    let plan = BlockPlan::new(fam.units(), 1, 4).unwrap();
    let st = s_nl_rmmgks(&fam, &mut FixedRegularizer(reg), &b, start, &plan, &cfg, cfg.max_outer, Some(&truth)).unwrap();
    let gap_b = rel_max_diff(&nl.u, &st.u).max(rel_max_diff(&nl.p, &st.p));
    let ok_b = gap_b < REDUCTION_TOL && st.blocks.len() == nl.history.len();

    // (c) frozen parameters with space-time differences against the linear dynamic path
    let (m, nt) = (8, 3);
    let dfam = BlockDiagonalFamily::replicate(ct_family(m, 8, 12), nt).unwrap();
    let seq: Vec<f64> = (0..nt).flat_map(|k| blob(m, 3.0 + k as f64, 4.0)).collect();
    let db = dfam.build(&[0.4]).unwrap().apply(&seq);
    let mut cfg = NlConfig::new(ParamUpdateMode::Frozen, window, 1e-2, RegParamPolicy::Gcv);
    cfg.max_outer = 5;
    let start = NlStart { u0: vec![0.0; m * m * nt], p0: vec![0.4], basis: None };
    let dy = dynamic_nl_rmmgks(&dfam, (m, m, nt), &db, start, &cfg, &DynamicConfig::new(TemporalStrategy::AnisoTv), None).unwrap();
    let lin_cfg = cfg.rmmgks(cfg.policy, dy.nl.history.len() * cfg.inner_cycles);
    let lin = dynamic_rmmgks(&dfam, &[0.4], (m, m, nt), &db, &lin_cfg).unwrap();
    let gap_c = rel_max_diff(&dy.nl.u, &lin.u).max(rel_max_diff(&dy.nl.state.objective_history, &lin.state.objective_history));
    let ok_c = gap_c < REDUCTION_TOL;

    v.record(
        4,
        "reduction identities",
        ok_a && ok_b && ok_c,
        format!("(a) frozen vs linear {gap_a:.1e} over {} iterates; (b) one block vs outer loop {gap_b:.1e}; (c) dynamic frozen vs linear {gap_c:.1e}", iterates.len()),
        t.elapsed().as_secs_f64(),
    );
}

fn blob(n: usize, cx: f64, cy: f64) -> Vec<f64> {
    let mut f = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let (dx, dy) = (ix as f64 - cx, iy as f64 - cy);
            f[iy * n + ix] = (-(dx * dx + dy * dy) / 6.0).exp();
        }
    }
    f
}

/// (Armijo violations, ascent directions, accepted steps).
fn step_audit(steps: &[ParamStep]) -> (usize, usize, usize) {
    let (mut armijo, mut ascent, mut accepted) = (0, 0, 0);
    for s in steps {
        if s.grad_norm > GN_GRAD_FLOOR && !(s.directional < 0.0) {
            ascent += 1;
        }
        if s.exhausted || s.alpha == 0.0 {
            continue;
        }
        accepted += 1;
        if !s.clamped && s.f_after > s.f_before + ARMIJO_C1 * s.alpha * s.directional + 1e-14 * s.f_before.abs() {
            armijo += 1;
        }
    }
    (armijo, ascent, accepted)
}

fn gauss_newton(v: &mut Verdicts) {
    let t = Instant::now();
    let n = 16;
    let a = ct_family(n, 20, 23).build(&[0.0]).unwrap();
    let u = shepp_logan(n);
    let p_star = 1.7;
    let b: Vec<f64> = a.apply(&u).iter().map(|x| p_star * x).collect();
    let scal = ScalingFamily { base: a };
    let upd = update_param_altmin(&scal, &u, &b, &[1.0], None, &GaussNewtonConfig::default()).unwrap();
    let err = (upd.p[0] - p_star).abs();
    let mut steps = upd.steps.clone();

    // nonlinear families: fan-beam angular offset and circular-array radius
    let fam = ct_family(n, 20, 23);
    let bct = fam.build(&[0.6]).unwrap().apply(&u);
    let gcfg = GaussNewtonConfig { max_iter: 8, tol_p: 0.0, ..Default::default() };
    for p0 in [-0.5, 0.0, 1.2] {
        steps.extend(update_param_altmin(&fam, &u, &bct, &[p0], None, &gcfg).unwrap().steps);
    }
    let pat = CircularMeanFamily::new(CircularArrayGeometry { n, n_circles: 2, sensors_per_circle: 12, radii_per_sensor: 12 }).unwrap();
    let bpat = pat.build(&[0.3]).unwrap().apply(&u);
    for p0 in [0.0, 0.5] {
        steps.extend(update_param_altmin(&pat, &u, &bpat, &[p0], None, &gcfg).unwrap().steps);
    }
    let reg = FiniteDifferences::new(RegKind::Spatial2d, n, n, 1).unwrap();
    let basis = golub_kahan(&fam.build(&[0.0]).unwrap(), &bct, 10).unwrap();
    let pv = weighted_images(&reg, &basis, &u, 0.05);
    steps.extend(update_param_varpro(&fam, &basis, &pv, &bct, &[0.0], None, 1e-2, &gcfg).unwrap().steps);

    let (armijo, ascent, accepted) = step_audit(&steps);
    let ok = err < GN_PARAM_TOL && armijo == 0 && ascent == 0 && accepted > 0;
    v.record(
        5,
        "Gauss-Newton correctness",
        ok,
        format!("|p - p*| = {err:.1e}; {accepted} accepted steps, {armijo} Armijo violations, {ascent} non-descent directions"),
        t.elapsed().as_secs_f64(),
    );
}

/// `P Ψ V` with weights taken at `u`.
fn weighted_images(reg: &dyn LinearOperator, basis: &nlgks_core::linalg::Basis, u: &[f64], eps: f64) -> DenseMatrix {
    let w = compute_weights(&reg.apply(u), eps).unwrap();
    let mut pv = DenseMatrix::with_capacity(reg.rows(), basis.width());
    for j in 0..basis.width() {
        let col: Vec<f64> = reg.apply(basis.column(j)).iter().zip(&w.entries).map(|(x, p)| x * p).collect();
        pv.push_column(&col);
    }
    pv
}

/// Blur whose width and center shift are the two parameters.
struct WidthShift(usize);

impl ParametricFamily for WidthShift {
    type Op = DenseMatrix;
    fn n_params(&self) -> usize {
        2
    }
    fn build(&self, p: &[f64]) -> nlgks_core::Result<DenseMatrix> {
        let n = self.0;
        let w = 3.0 + p[0];
        let mut h = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d = i as f64 - j as f64 + p[1];
                h.set(i, j, (-d * d / w).exp());
            }
        }
        Ok(h)
    }
}

fn varpro_gradient(v: &mut Verdicts) {
    let t = Instant::now();
    let n = 24;
    let fam = WidthShift(n);
    let truth: Vec<f64> = (0..n).map(|i| if (n / 4..n / 2).contains(&i) { 1.0 } else { 0.3 }).collect();
    let b = add_noise(&fam.build(&[0.5, 0.3]).unwrap().apply(&truth), 0.01, 2).data;
    let reg = FiniteDifferences::new(RegKind::Spatial2d, n, 1, 1).unwrap();
    let basis = golub_kahan(&fam.build(&[0.0, 0.0]).unwrap(), &b, 8).unwrap();
    let pv = weighted_images(&reg, &basis, &truth, 0.05);
    let h = 1e-5;
    let (mut worst_g, mut worst_u) = (0.0f64, 0.0f64);
    for p in [[0.1, -0.2], [0.5, 0.3], [-0.4, 0.7]] {
        for lambda in [1e-3, 0.1, 1.0] {
            let ev = varpro_inner_solve(&fam, &p, &basis, &pv, &b, lambda).unwrap();
            let sens = varpro_sensitivity(&fam, &p, &ev, &basis, &pv, lambda).unwrap();
            let mut g = Vec::new();
            let mut fd = Vec::new();
            for j in 0..2 {
                g.push(dot(sens.j_r.column(j), &ev.r) + lambda * dot(sens.j_s.column(j), &ev.s));
                let mut up = p;
                let mut dn = p;
                up[j] += h;
                dn[j] -= h;
                let eu = varpro_inner_solve(&fam, &up, &basis, &pv, &b, lambda).unwrap();
                let ed = varpro_inner_solve(&fam, &dn, &basis, &pv, &b, lambda).unwrap();
                fd.push((eu.f - ed.f) / (2.0 * h));
                let du_fd: Vec<f64> = eu.u.iter().zip(&ed.u).map(|(a, c)| (a - c) / (2.0 * h)).collect();
                worst_u = worst_u.max(relative_change(&sens.du(&basis, j), &du_fd));
            }
            worst_g = worst_g.max(norm2(&sub(&g, &fd)) / norm2(&g));
        }
    }
    let ok = worst_g < VARPRO_TOL && worst_u < VARPRO_TOL;
    v.record(
        6,
        "VarPro gradient and sensitivities",
        ok,
        format!("reduced gradient rel err {worst_g:.1e}, sensitivity rel err {worst_u:.1e} over 9 (p, λ) points"),
        t.elapsed().as_secs_f64(),
    );
}

fn find<'a>(runs: &'a [RunOutput], name: &str) -> &'a RunOutput {
    runs.iter().find(|r| r.config.name == name).unwrap_or_else(|| panic!("missing run {name}"))
}

fn test1(v: &mut Verdicts, runs: &[RunOutput], secs: f64) {
    let n = [1, 2, 4].map(|k| find(runs, &format!("nl_n{k}")));
    let unc = find(runs, "uncalibrated");
    let abs: Vec<f64> = n.iter().map(|r| r.summary.param_abs_err).collect();
    let rre: Vec<f64> = n.iter().map(|r| r.summary.rre).collect();
    let ok = abs.iter().all(|e| *e < T1_PARAM_ABS)
        && rre.windows(2).all(|w| w[1] >= w[0] - T1_RRE_SLACK)
        && rre[0] < unc.summary.rre;
    v.record(
        7,
        "desk static CT, N = 1, 2, 4",
        ok,
        format!(
            "abs p err {:.4}/{:.4}/{:.4} deg, RRE {:.4}/{:.4}/{:.4}, uncalibrated RRE {:.4}",
            abs[0], abs[1], abs[2], rre[0], rre[1], rre[2], unc.summary.rre
        ),
        secs,
    );
}

fn test3(v: &mut Verdicts, runs: &[RunOutput], secs: f64) {
    let (of, an) = (find(runs, "of"), find(runs, "aniso"));
    let ok = of.summary.rre < an.summary.rre && of.summary.param_abs_err < T3_PARAM_ABS && an.summary.param_abs_err < T3_PARAM_ABS;
    v.record(
        8,
        "desk dynamic CT, optical flow vs space-time TV",
        ok,
        format!(
            "RRE OF {:.4} vs ANISO {:.4}; abs p err {:.4} / {:.4} deg",
            of.summary.rre, an.summary.rre, of.summary.param_abs_err, an.summary.param_abs_err
        ),
        secs,
    );
}

fn test4(v: &mut Verdicts, runs: &[RunOutput], secs: f64) {
    let rre = |name: &str| find(runs, name).summary.rre;
    let (o10, o25, a10, a25) = (rre("of_kmax10"), rre("of_kmax25"), rre("aniso_kmax10"), rre("aniso_kmax25"));
    let ok = (o10 - o25).abs() < T4_KMAX_GAP && o10 < a10 && o25 < a25;
    v.record(
        9,
        "desk dynamic PAT, k_max insensitivity",
        ok,
        format!("RRE OF {o10:.4} (k_max 10) / {o25:.4} (k_max 25); ANISO {a10:.4} / {a25:.4}"),
        secs,
    );
}

/// First iteration with relative parameter error below the threshold.
fn first_hit(r: &RunOutput) -> Option<usize> {
    r.metrics.iter().position(|m| m.param_err < T2_PARAM_REL)
}

fn max_excursion(r: &RunOutput) -> f64 {
    r.metrics.windows(2).map(|w| w[1].rre - w[0].rre).fold(0.0, f64::max)
}

fn test2(v: &mut Verdicts, runs: &[RunOutput], secs: f64) {
    let (alt, vp) = (find(runs, "altmin_off0.6"), find(runs, "varpro_off0.6"));
    let (ha, hv) = (first_hit(alt), first_hit(vp));
    let faster = match (ha, hv) {
        (Some(a), Some(b)) => a <= b,
        (Some(_), None) => true,
        _ => false,
    };
    let (ea, ev) = (max_excursion(alt), max_excursion(vp));
    let wilder = ev > T2_EXCURSION && ea <= T2_EXCURSION;
    let near: Vec<String> = ["altmin_off0.1", "varpro_off0.1"]
        .iter()
        .map(|n| format!("{n} RRE {:.4}", find(runs, n).summary.rre))
        .collect();
    let fmt = |h: Option<usize>| h.map_or("never".to_string(), |k| k.to_string());
    v.record(
        10,
        "desk PAT initialization robustness",
        faster || wilder,
        format!(
            "offset 0.6: iterations to p err < 5e-2 AltMin {} / VarPro {}; max RRE rise AltMin {ea:.3} / VarPro {ev:.3}; {}",
            fmt(ha),
            fmt(hv),
            near.join(", ")
        ),
        secs,
    );
}

fn operator_suite(v: &mut Verdicts) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = Vec::new();
    let mut adj = |name: &str, op: &dyn LinearOperator, rng: &mut ChaCha8Rng| {
        let x = gaussian(rng, op.cols());
        let y = gaussian(rng, op.rows());
        worst.push((name.to_string(), adjoint_mismatch(op, &x, &y)));
    };
    let (n, nt) = (12, 3);
    let ct = ct_family(n, 15, 17);
    adj("CT", &ct.build(&[0.37]).unwrap(), &mut rng);
    let pat = CircularMeanFamily::new(CircularArrayGeometry { n, n_circles: 2, sensors_per_circle: 10, radii_per_sensor: 9 }).unwrap();
    adj("PAT", &pat.build(&[0.21]).unwrap(), &mut rng);
    adj("block-diagonal", &BlockDiagonalFamily::replicate(ct, nt).unwrap().build(&[0.1]).unwrap(), &mut rng);
    let d1 = FiniteDifferences::new(RegKind::Spatial2d, n, n, 1).unwrap();
    adj("D1", &d1, &mut rng);
    let tv = build_theta(TemporalStrategy::AnisoTv, n, n, nt, None).unwrap();
    adj("space-time D", &tv, &mut rng);
    let mut vel = VelocityField::zeros(n, n, nt - 1);
    for d in &mut vel.pairs {
        *d = Displacement { sx: gaussian(&mut rng, n * n), sy: gaussian(&mut rng, n * n) };
    }
    let (of, _) = optical_flow_theta(&vel, nt).unwrap();
    adj("optical-flow stack", &of, &mut rng);
    let adj_ok = worst.iter().all(|(_, e)| *e < ADJOINT_TOL);

    let null = |op: &RegOperator| op.apply(&vec![2.5; op.cols()]).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let d1_null = d1.apply(&vec![2.5; n * n]).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let nulls = [d1_null, null(&tv), null(&of)];
    let null_ok = nulls.iter().all(|e| *e < NULLSPACE_TOL);

    let frame = gaussian(&mut rng, n * n);
    let (warp, clamped) = Warp::new(n, n, &Displacement::zeros(n * n)).unwrap();
    let warp_ok = warp.apply(&frame) == frame && clamped == 0;

    let adj_txt: Vec<String> = worst.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect();
    v.record(
        11,
        "operator suite",
        adj_ok && null_ok && warp_ok,
        format!("adjoint {}; constants -> {:.1e}/{:.1e}/{:.1e}; zero-velocity warp identity {warp_ok}", adj_txt.join(", "), nulls[0], nulls[1], nulls[2]),
        t.elapsed().as_secs_f64(),
    );
}

fn determinism(v: &mut Verdicts) {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        "name = \"static\"\nn = 16\nangles = 12\ndetectors = 23\np_true = 0.3\nmax_outer = 4\nk_max = 10\n",
        "name = \"stream\"\nn = 16\nangles = 12\ndetectors = 23\np_true = 0.3\nblocks = 3\nmax_passes = 2\nmax_outer = 4\nk_max = 10\nmethod = \"varpro\"\n",
        "name = \"dyn\"\nmodality = \"pat\"\nphantom = \"moving_shapes\"\nn = 12\nframes = 3\ncircles = 2\nsensors_per_circle = 8\nradii = 10\np_true = 0.1\nmax_outer = 3\nk_max = 10\n",
    ];
    let mut same = 0;
    for (i, text) in configs.iter().enumerate() {
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let path = dir.path().join(format!("m{i}_{rep}.csv"));
            write_metrics(&path, &run_experiment(&cfg).unwrap().metrics).unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        if bytes[0] == bytes[1] && !bytes[0].is_empty() {
            same += 1;
        }
    }
    v.record(12, "bit-identical reruns", same == configs.len(), format!("{same}/{} configs byte-identical", configs.len()), t.elapsed().as_secs_f64());
}

fn run_all(cfgs: Vec<ExperimentConfig>) -> (Vec<RunOutput>, f64) {
    let t = Instant::now();
    let runs = cfgs.iter().map(|c| run_experiment(c).unwrap_or_else(|e| panic!("{}: {e}", c.name))).collect();
    (runs, t.elapsed().as_secs_f64())
}

#[test]
fn acceptance() {
    report("");
    let mut v = Verdicts { all: Vec::new() };
    majorant_suite(&mut v);
    monotone_descent(&mut v);

    let (r1, s1) = run_all(test1_desk());
    let (r2, s2) = run_all(test2_desk());
    let streamed: Vec<&RunOutput> = r1.iter().chain(&r2).collect();
    memory_bound(&mut v, &streamed);
    reductions(&mut v);
    gauss_newton(&mut v);
    varpro_gradient(&mut v);
    test1(&mut v, &r1, s1);
    let (r3, s3) = run_all(test3_desk());
    test3(&mut v, &r3, s3);
    let (r4, s4) = run_all(test4_desk());
    test4(&mut v, &r4, s4);
    test2(&mut v, &r2, s2);
    operator_suite(&mut v);
    determinism(&mut v);

    let failed: Vec<usize> = v.all.iter().filter(|(_, ok)| !ok).map(|(id, _)| *id).collect();
    report(&format!("{} of {} criteria pass", v.all.len() - failed.len(), v.all.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
