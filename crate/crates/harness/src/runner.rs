//! End-to-end experiment pipeline: phantom, forward data, noise,
//! initialization, joint reconstruction, metrics.

use std::time::Instant;

use nlgks_core::diagnostics::Diagnostics;
use nlgks_core::dynamic::{BlockDiagonalFamily, DynamicConfig, TemporalRegularizer, TemporalStrategy};
use nlgks_core::mmgks::RegParamPolicy;
use nlgks_core::nonlinear::{
    grid_init, nl_drive_observed, FixedRegularizer, HighReg, NlConfig, NlStart, OuterRecord, ParamUpdateMode,
    RegularizerSource,
};
use nlgks_core::operators::ct::{FanBeamFamily, FanBeamGeometry};
use nlgks_core::operators::motion::VelocityField;
use nlgks_core::operators::pat::{CircularArrayGeometry, CircularMeanFamily};
use nlgks_core::operators::reg::{FiniteDifferences, RegKind};
use nlgks_core::operators::{BlockedFamily, LinearOperator};
use nlgks_core::recycling::RecycleWindow;
use nlgks_core::streaming::{s_nl_rmmgks_observed, BlockPlan, MemoryLedger};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{AngleSampling, ExperimentConfig, InitPolicy, LambdaRule, Method, Modality, Temporal};
use crate::noise::add_noise;
use crate::phantom::{default_shapes, dynamic_blocks, moving_shapes, shepp_logan, tectonic, PhantomKind};
use crate::HarnessError;

// Independent streams derived from the run seed.
const ANGLE_STREAM: u64 = 0x616e676c;
const NOISE_STREAM: u64 = 0x6e6f6973;
const BLOCK_STREAM: u64 = 0x626c6f63;
const PHANTOM_STREAM: u64 = 0x7068616e;

fn stream(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ tag
}

/// One row of the per-iteration metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub rre: f64,
    pub param_err: f64,
    pub lambda: f64,
    pub objective: f64,
    pub basis_cols: usize,
    pub alpha: Option<f64>,
    pub wall_ms: Option<u64>,
}

/// One line of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub method: String,
    pub temporal: String,
    pub blocks: usize,
    pub k_max: usize,
    pub inner_iters: usize,
    pub p_true: f64,
    pub p0: f64,
    pub p_final: f64,
    pub rre: f64,
    pub param_err: f64,
    pub param_abs_err: f64,
    pub iterations: usize,
    pub passes: usize,
    pub converged: bool,
    pub peak_basis_columns: usize,
    pub peak_aux_basis_columns: usize,
    pub peak_operator_rows: usize,
    pub flags: String,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub truth: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub p0: Vec<f64>,
    pub history: Vec<OuterRecord>,
    pub metrics: Vec<MetricsRow>,
    pub summary: SummaryRow,
    pub ledger: MemoryLedger,
    pub diagnostics: Diagnostics,
    pub velocity: Option<VelocityField>,
    /// `(iteration, image)` pairs requested by `dump_every`.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

/// Relative parameter error, or absolute when the truth is zero.
pub fn param_error(p: f64, p_true: f64) -> f64 {
    if p_true == 0.0 {
        (p - p_true).abs()
    } else {
        (p - p_true).abs() / p_true.abs()
    }
}

fn angle_set(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match cfg.angle_sampling {
        AngleSampling::Uniform => (0..cfg.angles).map(|i| 180.0 * i as f64 / cfg.angles as f64).collect(),
        AngleSampling::Random => {
            let mut a: Vec<f64> = (0..cfg.angles).map(|_| rng.random_range(0.0..180.0)).collect();
            a.sort_by(f64::total_cmp);
            a
        }
    }
}

fn pat_geometry(cfg: &ExperimentConfig) -> CircularArrayGeometry {
    CircularArrayGeometry {
        n: cfg.n,
        n_circles: cfg.circles,
        sensors_per_circle: cfg.sensors_per_circle,
        radii_per_sensor: cfg.radii,
    }
}

/// Sensors seen in frame `t`: evenly spread, rotated by one slot per frame.
fn frame_sensors(total: usize, per_frame: usize, t: usize) -> Vec<usize> {
    let stride = total / per_frame;
    let shift = t % stride;
    (0..per_frame).map(|i| i * stride + shift).collect()
}

pub fn make_truth(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = cfg.n;
    match cfg.phantom {
        PhantomKind::SheppLogan => shepp_logan(n),
        PhantomKind::Tectonic => tectonic(n, cfg.plates, stream(cfg.seed, PHANTOM_STREAM)),
        PhantomKind::MovingShapes => moving_shapes(n, cfg.frames, &default_shapes(n)).data,
        PhantomKind::DynamicBlocks => dynamic_blocks(n, cfg.frames).data,
    }
}

/// Runs one configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, ANGLE_STREAM));
    match (cfg.modality, cfg.is_dynamic()) {
        (Modality::Ct, false) => {
            let fam = FanBeamFamily::new(FanBeamGeometry::standard(cfg.n, angle_set(cfg, &mut rng), cfg.detectors))?;
            solve(cfg, &fam)
        }
        (Modality::Ct, true) => {
            let frames = (0..cfg.frames)
                .map(|_| FanBeamFamily::new(FanBeamGeometry::standard(cfg.n, angle_set(cfg, &mut rng), cfg.detectors)))
                .collect::<Result<Vec<_>, _>>()?;
            solve(cfg, &BlockDiagonalFamily::new(frames)?)
        }
        (Modality::Pat, false) => solve(cfg, &CircularMeanFamily::new(pat_geometry(cfg))?),
        (Modality::Pat, true) => {
            let full = CircularMeanFamily::new(pat_geometry(cfg))?;
            let total = full.units();
            let frames = (0..cfg.frames)
                .map(|t| match cfg.sensors_per_frame {
                    0 => Ok(full.clone()),
                    k => full.restrict(&frame_sensors(total, k, t)),
                })
                .collect::<Result<Vec<_>, _>>()?;
            solve(cfg, &BlockDiagonalFamily::new(frames)?)
        }
    }
}

pub fn nl_config(cfg: &ExperimentConfig, noise_norm: f64) -> Result<NlConfig, HarnessError> {
    let window = RecycleWindow::new(cfg.k_min, cfg.k_max)?;
    let policy = match cfg.lambda_rule {
        LambdaRule::Fixed => RegParamPolicy::Fixed(cfg.lambda),
        LambdaRule::Gcv => RegParamPolicy::Gcv,
        LambdaRule::Discrepancy => RegParamPolicy::Discrepancy { noise_norm, tau: cfg.tau },
    };
    let mode = match cfg.method {
        Method::Altmin => ParamUpdateMode::AltMin,
        Method::Varpro => ParamUpdateMode::VarPro,
        Method::Frozen => ParamUpdateMode::Frozen,
    };
    let mut c = NlConfig::new(mode, window, cfg.epsilon, policy);
    c.high_reg = cfg.high_reg_enabled().then(HighReg::default);
    c.tol1 = cfg.tol1;
    c.solves_per_cycle = (cfg.inner_iters > 0).then_some(cfg.inner_iters);
    c.max_outer = cfg.max_outer;
    c.tol_outer = cfg.tol_outer;
    c.tol_p = cfg.tol_p;
    c.bounds = cfg.p_bounds.map(|[lo, hi]| vec![(lo, hi)]);
    c.refresh_each_outer = cfg.is_dynamic() && cfg.temporal == Temporal::OpticalFlow;
    Ok(c)
}

fn solve<F: BlockedFamily>(cfg: &ExperimentConfig, family: &F) -> Result<RunOutput, HarnessError> {
    let t0 = Instant::now();
    let truth = make_truth(cfg);
    let clean = family.build(&[cfg.p_true])?.apply(&truth);
    let noisy = add_noise(&clean, cfg.noise, stream(cfg.seed, NOISE_STREAM));
    let b = noisy.data;
    let p0 = match cfg.p_init {
        InitPolicy::Grid => {
            let k = cfg.grid_points;
            let cands: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    let s = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.5 };
                    vec![cfg.grid_lo + s * (cfg.grid_hi - cfg.grid_lo)]
                })
                .collect();
            grid_init(family, &b, &cands, cfg.grid_basis, &[0.0])?.p
        }
        _ => vec![cfg.explicit_p0()],
    };
    let nl = nl_config(cfg, noisy.noise_norm)?;
    let n_img = truth.len();
    let start = NlStart { u0: vec![0.0; n_img], p0: p0.clone(), basis: None };

    let mut metrics = Vec::new();
    let mut snapshots = Vec::new();
    let mut observe = |r: &OuterRecord, u: &[f64]| {
        metrics.push(MetricsRow {
            iter: r.k,
            rre: r.rre.unwrap_or(f64::NAN),
            param_err: param_error(r.p[0], cfg.p_true),
            lambda: r.lambda,
            objective: r.objective,
            basis_cols: r.width,
            alpha: r.alpha,
            wall_ms: cfg.timing.then(|| t0.elapsed().as_millis() as u64),
        });
        if cfg.dump_every > 0 && (r.k + 1) % cfg.dump_every == 0 {
            snapshots.push((r.k, u.to_vec()));
        }
    };

    let (nx, nt) = (cfg.n, cfg.frames);
    let (out, velocity) = if cfg.is_dynamic() {
        let strategy = match cfg.temporal {
            Temporal::AnisoTv => TemporalStrategy::AnisoTv,
            Temporal::OpticalFlow => TemporalStrategy::OpticalFlow,
        };
        let mut dc = DynamicConfig::new(strategy);
        dc.tau = (cfg.flow_period > 0).then_some(cfg.flow_period);
        let mut reg = TemporalRegularizer::new(nx, nx, nt, dc)?;
        let mut r = drive(cfg, family, &mut reg, &b, start, &nl, &truth, &mut observe)?;
        r.diagnostics.warp_clamped += reg.warp_clamped as u32;
        (r, reg.velocity)
    } else {
        let mut reg = FixedRegularizer(FiniteDifferences::new(RegKind::Spatial2d, nx, nx, 1)?);
        (drive(cfg, family, &mut reg, &b, start, &nl, &truth, &mut observe)?, None)
    };
    let (ledger, diagnostics, passes) = (out.ledger, out.diagnostics, out.passes);
    if ledger.peak_basis_columns > cfg.k_max + 1 || ledger.peak_aux_basis_columns > cfg.k_max + 1 {
        return Err(HarnessError::Invariant(format!(
            "basis width {} exceeds k_max + 1 = {}",
            ledger.peak_basis_columns.max(ledger.peak_aux_basis_columns),
            cfg.k_max + 1
        )));
    }
    let rre = crate::metrics::rre(&out.u, &truth)?;
    let summary = SummaryRow {
        name: cfg.name.clone(),
        method: format!("{:?}", cfg.method).to_lowercase(),
        temporal: if cfg.is_dynamic() {
            match cfg.temporal {
                Temporal::AnisoTv => "aniso_tv".into(),
                Temporal::OpticalFlow => "optical_flow".into(),
            }
        } else {
            "none".into()
        },
        blocks: cfg.blocks,
        k_max: cfg.k_max,
        inner_iters: cfg.inner_iters,
        p_true: cfg.p_true,
        p0: p0[0],
        p_final: out.p[0],
        rre,
        param_err: param_error(out.p[0], cfg.p_true),
        param_abs_err: (out.p[0] - cfg.p_true).abs(),
        iterations: out.history.len(),
        passes,
        converged: out.converged,
        peak_basis_columns: ledger.peak_basis_columns,
        peak_aux_basis_columns: ledger.peak_aux_basis_columns,
        peak_operator_rows: ledger.peak_operator_rows,
        flags: flags(&diagnostics),
        wall_ms: t0.elapsed().as_millis() as u64,
    };
    Ok(RunOutput {
        config: cfg.clone(),
        truth,
        u: out.u,
        p: out.p,
        p0,
        history: out.history,
        metrics,
        summary,
        ledger,
        diagnostics,
        velocity,
        snapshots,
    })
}

struct Driven {
    u: Vec<f64>,
    p: Vec<f64>,
    history: Vec<OuterRecord>,
    converged: bool,
    passes: usize,
    ledger: MemoryLedger,
    diagnostics: Diagnostics,
}

#[allow(clippy::too_many_arguments)]
fn drive<F: BlockedFamily, R: RegularizerSource>(
    cfg: &ExperimentConfig,
    family: &F,
    reg: &mut R,
    b: &[f64],
    start: NlStart,
    nl: &NlConfig,
    truth: &[f64],
    observe: &mut dyn FnMut(&OuterRecord, &[f64]),
) -> Result<Driven, HarnessError> {
    let mut ledger = MemoryLedger::default();
    if cfg.blocks == 1 {
        let out = nl_drive_observed(family, reg, b, start, nl, Some(truth), observe)?;
        ledger.observe(out.peak_width, out.peak_aux_width, b.len(), family.units());
        return Ok(Driven {
            u: out.u,
            p: out.p,
            converged: out.converged,
            passes: out.passes,
            history: out.history,
            ledger,
            diagnostics: out.diagnostics,
        });
    }
    let plan = BlockPlan::new(family.units(), cfg.blocks, stream(cfg.seed, BLOCK_STREAM))?;
    let s = s_nl_rmmgks_observed(family, reg, b, start, &plan, nl, cfg.max_passes, Some(truth), observe)?;
    Ok(Driven {
        history: s.blocks.iter().flat_map(|r| r.history.clone()).collect(),
        u: s.u,
        p: s.p,
        converged: s.converged,
        passes: s.passes,
        ledger: s.ledger,
        diagnostics: s.diagnostics,
    })
}

/// Nonzero diagnostic counters as `name=count` joined by `;`.
pub fn flags(d: &Diagnostics) -> String {
    let items = [
        ("lambda_boundary", d.lambda_boundary),
        ("lambda_gcv_fallback", d.lambda_gcv_fallback),
        ("rank_deficient_solves", d.rank_deficient_solves),
        ("line_search_exhausted", d.line_search_exhausted),
        ("param_clamped", d.param_clamped),
        ("warp_clamped", d.warp_clamped),
        ("expansion_skipped", d.expansion_skipped),
    ];
    items.iter().filter(|(_, v)| *v > 0).map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            n: 16,
            angles: 12,
            detectors: 23,
            p_true: 0.3,
            max_outer: 4,
            k_max: 10,
            ..Default::default()
        }
    }

    #[test]
    fn static_ct_run_produces_metrics() {
        let out = run_experiment(&tiny()).unwrap();
        assert_eq!(out.metrics.len(), out.history.len());
        assert!(out.summary.rre < 1.0);
        assert!(out.ledger.peak_basis_columns <= 11);
        assert!(out.metrics.iter().all(|m| m.wall_ms.is_none()));
    }

    #[test]
    fn seeded_runs_identical() {
        let a = run_experiment(&tiny()).unwrap();
        let b = run_experiment(&tiny()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn streaming_run_covers_blocks() {
        let c = ExperimentConfig { blocks: 3, max_passes: 2, ..tiny() };
        let out = run_experiment(&c).unwrap();
        assert!(out.summary.passes <= 2);
        assert_eq!(out.ledger.peak_operator_rows, 4 * 23);
    }

    #[test]
    fn dynamic_pat_sensor_rotation() {
        let s0 = frame_sensors(32, 8, 0);
        let s1 = frame_sensors(32, 8, 1);
        assert_eq!(s0, vec![0, 4, 8, 12, 16, 20, 24, 28]);
        assert_eq!(s1, vec![1, 5, 9, 13, 17, 21, 25, 29]);
        assert_eq!(frame_sensors(32, 8, 4), s0);
    }

    #[test]
    fn grid_init_picks_a_candidate() {
        let c = ExperimentConfig { p_init: InitPolicy::Grid, grid_lo: -0.6, grid_hi: 0.6, grid_points: 3, max_outer: 1, ..tiny() };
        let out = run_experiment(&c).unwrap();
        assert!([-0.6, 0.0, 0.6].iter().any(|v| (out.p0[0] - v).abs() < 1e-12));
    }

    #[test]
    fn param_error_relative_or_absolute() {
        assert!((param_error(0.3, 0.2) - 0.5).abs() < 1e-12);
        assert_eq!(param_error(0.1, 0.0), 0.1);
    }
}
