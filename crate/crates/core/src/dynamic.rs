//! Multi-frame reconstruction: block-diagonal forward models, optical-flow
//! velocity estimation, the motion-aware regularizer and the dynamic outer
//! loop.

use alloc::vec::Vec;

use crate::error::{arg_err, dim_err, Result};
use crate::linalg::norm2;
use crate::mmgks::{compute_weights, Penalty, RegParamPolicy, SolverState};
use crate::nonlinear::{nl_drive, FixedRegularizer, NlConfig, NlOutput, NlStart, RegularizerSource};
use crate::operators::motion::{MotionOperator, VelocityField};
use crate::operators::reg::{FiniteDifferences, RegKind, RegOperator};
use crate::operators::{BlockedFamily, LinearOperator, ParametricFamily, RowScaled, VStack};
use crate::recycling::{rmmgks, RmmgksConfig, RmmgksOutput};
use crate::streaming::{s_nl_rmmgks, BlockPlan, StreamOutput};

pub use crate::operators::motion::Displacement;

/// Frames stacked into one vector, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSequence {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub data: Vec<f64>,
}

impl DynamicSequence {
    pub fn new(nx: usize, ny: usize, nt: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nx * ny * nt {
            return dim_err("sequence length does not match frame geometry");
        }
        Ok(Self { nx, ny, nt, data })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let ns = self.nx * self.ny;
        &self.data[t * ns..(t + 1) * ns]
    }
}

/// `diag(H_1, ..., H_nt)`
#[derive(Debug, Clone)]
pub struct BlockDiagonal<O> {
    blocks: Vec<O>,
    row_off: Vec<usize>,
    col_off: Vec<usize>,
}

impl<O: LinearOperator> BlockDiagonal<O> {
    pub fn new(blocks: Vec<O>) -> Self {
        let mut row_off = alloc::vec![0];
        let mut col_off = alloc::vec![0];
        for b in &blocks {
            row_off.push(row_off.last().unwrap() + b.rows());
            col_off.push(col_off.last().unwrap() + b.cols());
        }
        Self { blocks, row_off, col_off }
    }

    pub fn blocks(&self) -> &[O] {
        &self.blocks
    }
}

impl<O: LinearOperator> LinearOperator for BlockDiagonal<O> {
    fn rows(&self) -> usize {
        *self.row_off.last().unwrap()
    }
    fn cols(&self) -> usize {
        *self.col_off.last().unwrap()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (t, b) in self.blocks.iter().enumerate() {
            b.apply_into(&x[self.col_off[t]..self.col_off[t + 1]], &mut y[self.row_off[t]..self.row_off[t + 1]]);
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        for (t, b) in self.blocks.iter().enumerate() {
            b.adjoint_into(&y[self.row_off[t]..self.row_off[t + 1]], &mut x[self.col_off[t]..self.col_off[t + 1]]);
        }
    }
}

/// Per-frame families sharing one parameter vector. Units are the frames'
/// units concatenated in frame order.
#[derive(Debug, Clone)]
pub struct BlockDiagonalFamily<F> {
    frames: Vec<F>,
}

impl<F: ParametricFamily> BlockDiagonalFamily<F> {
    pub fn new(frames: Vec<F>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return arg_err("at least one frame is required");
        };
        let np = first.n_params();
        if frames.iter().any(|f| f.n_params() != np) {
            return arg_err("frame families disagree in parameter count");
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }
}

impl<F: ParametricFamily + Clone> BlockDiagonalFamily<F> {
    pub fn replicate(frame: F, nt: usize) -> Result<Self> {
        Self::new(alloc::vec![frame; nt])
    }
}

impl<F: ParametricFamily> ParametricFamily for BlockDiagonalFamily<F> {
    type Op = BlockDiagonal<F::Op>;
    fn n_params(&self) -> usize {
        self.frames[0].n_params()
    }
    fn build(&self, p: &[f64]) -> Result<Self::Op> {
        Ok(BlockDiagonal::new(self.frames.iter().map(|f| f.build(p)).collect::<Result<Vec<_>>>()?))
    }
}

impl<F: BlockedFamily> BlockDiagonalFamily<F> {
    fn locate(&self, mut unit: usize) -> (usize, usize) {
        for (t, f) in self.frames.iter().enumerate() {
            if unit < f.units() {
                return (t, unit);
            }
            unit -= f.units();
        }
        (self.frames.len(), unit)
    }
}

impl<F: BlockedFamily> BlockedFamily for BlockDiagonalFamily<F> {
    fn units(&self) -> usize {
        self.frames.iter().map(|f| f.units()).sum()
    }
    fn rows_per_unit(&self, unit: usize) -> usize {
        let (t, k) = self.locate(unit);
        self.frames[t].rows_per_unit(k)
    }
    /// Units must be strictly increasing so rows keep frame order.
    fn restrict(&self, units: &[usize]) -> Result<Self> {
        if units.windows(2).any(|w| w[0] >= w[1]) || units.last().is_some_and(|&u| u >= self.units()) {
            return arg_err("restriction units must be increasing and in range");
        }
        let mut per: Vec<Vec<usize>> = alloc::vec![Vec::new(); self.frames.len()];
        for &u in units {
            let (t, k) = self.locate(u);
            per[t].push(k);
        }
        let frames = self.frames.iter().zip(&per).map(|(f, us)| f.restrict(us)).collect::<Result<Vec<_>>>()?;
        Ok(Self { frames })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowNorm {
    L1,
    L2,
}

/// Choice of the flow regularization parameter `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OfGamma {
    Gcv,
    Fixed(f64),
    /// `c · max |∇u|²` over the first frame.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfConfig {
    pub gamma: OfGamma,
    /// Exponent of the data misfit.
    pub data_norm: FlowNorm,
    /// Exponent of the flow smoothness term.
    pub reg_norm: FlowNorm,
    /// Initial Golub-Kahan steps.
    pub k0: usize,
    /// Generalized Krylov steps per weighted solve.
    pub steps: usize,
    /// Reweighting rounds when the data misfit uses the 1-norm.
    pub irls: usize,
    pub epsilon: f64,
}

impl Default for OfConfig {
    fn default() -> Self {
        Self {
            gamma: OfGamma::Relative(1.0),
            data_norm: FlowNorm::L2,
            reg_norm: FlowNorm::L2,
            k0: 3,
            steps: 30,
            irls: 5,
            epsilon: 1e-2,
        }
    }
}

/// Central-difference gradients, one-sided at the border.
pub fn image_gradients(frame: &[f64], nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |ix: usize, iy: usize| frame[iy * nx + ix];
    let diff = |lo: f64, hi: f64, span: usize| if span == 0 { 0.0 } else { (hi - lo) / span as f64 };
    let mut gx = alloc::vec![0.0; nx * ny];
    let mut gy = alloc::vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let (l, r) = (ix.saturating_sub(1), (ix + 1).min(nx - 1));
            let (d, u) = (iy.saturating_sub(1), (iy + 1).min(ny - 1));
            gx[iy * nx + ix] = diff(at(l, iy), at(r, iy), r - l);
            gy[iy * nx + ix] = diff(at(ix, d), at(ix, u), u - d);
        }
    }
    (gx, gy)
}

/// `[diag(u_x), diag(u_y)]` acting on `[s_x; s_y]`.
#[derive(Debug, Clone)]
struct FlowData {
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl LinearOperator for FlowData {
    fn rows(&self) -> usize {
        self.gx.len()
    }
    fn cols(&self) -> usize {
        2 * self.gx.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.gx.len();
        for i in 0..ns {
            y[i] = self.gx[i] * x[i] + self.gy[i] * x[ns + i];
        }
    }
    fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let ns = self.gx.len();
        for i in 0..ns {
            x[i] = self.gx[i] * y[i];
            x[ns + i] = self.gy[i] * y[i];
        }
    }
}

/// Velocity carrying `frame_a` onto `frame_b`, i.e. `a(x) ≈ b(x + s(x))`.
pub fn solve_of(frame_a: &[f64], frame_b: &[f64], nx: usize, ny: usize, cfg: &OfConfig) -> Result<Displacement> {
    let ns = nx * ny;
    if frame_a.len() != ns || frame_b.len() != ns {
        return dim_err("frames do not match the geometry");
    }
    let (gx, gy) = image_gradients(frame_a, nx, ny);
    let policy = match cfg.gamma {
        OfGamma::Gcv => RegParamPolicy::Gcv,
        OfGamma::Fixed(g) => RegParamPolicy::Fixed(g),
        OfGamma::Relative(c) => {
            RegParamPolicy::Fixed(c * gx.iter().zip(&gy).map(|(x, y)| x * x + y * y).fold(0.0, f64::max))
        }
    };
    let data = FlowData { gx, gy };
    let rhs: Vec<f64> = frame_a.iter().zip(frame_b).map(|(a, b)| a - b).collect();
    if norm2(&data.adjoint(&rhs)) == 0.0 {
        return Ok(Displacement::zeros(ns));
    }
    let lhat = FiniteDifferences::new(RegKind::Spatial2d, nx, ny, 2)?;
    let penalty = match cfg.reg_norm {
        FlowNorm::L2 => Penalty::Quadratic,
        FlowNorm::L1 => Penalty::Smoothed { epsilon: cfg.epsilon },
    };
    let rounds = if cfg.data_norm == FlowNorm::L1 { cfg.irls.max(1) } else { 1 };
    let mut s = alloc::vec![0.0; 2 * ns];
    for _ in 0..rounds {
        let weights = match cfg.data_norm {
            FlowNorm::L2 => alloc::vec![1.0; ns],
            FlowNorm::L1 => {
                let r: Vec<f64> = data.apply(&s).iter().zip(&rhs).map(|(a, b)| a - b).collect();
                compute_weights(&r, cfg.epsilon)?.entries
            }
        };
        let rhs_w: Vec<f64> = rhs.iter().zip(&weights).map(|(a, w)| a * w).collect();
        let op = RowScaled { op: data.clone(), weights };
        let mut state = SolverState::seeded(&op, &lhat, &rhs_w, alloc::vec![0.0; 2 * ns], cfg.k0.max(1), penalty)?;
        for step in 0..cfg.steps.max(1) {
            state.solve_reduced(&op, &lhat, &rhs_w, policy)?;
            if step + 1 < cfg.steps && !state.expand(&op, &lhat) {
                break;
            }
        }
        s = state.u;
    }
    let sy = s.split_off(ns);
    Ok(Displacement { sx: s, sy })
}

/// Reverse velocities approximated by negating the forward ones.
pub fn reverse_flow(v: &VelocityField) -> VelocityField {
    VelocityField { nx: v.nx, ny: v.ny, pairs: v.pairs.iter().map(Displacement::negated).collect() }
}

/// Forward velocities for every consecutive frame pair of `u`.
pub fn estimate_velocity(u: &[f64], nx: usize, ny: usize, nt: usize, cfg: &OfConfig) -> Result<VelocityField> {
    let seq = DynamicSequence::new(nx, ny, nt, u.to_vec())?;
    let pairs = (0..nt.saturating_sub(1))
        .map(|t| solve_of(seq.frame(t), seq.frame(t + 1), nx, ny, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(VelocityField { nx, ny, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalStrategy {
    AnisoTv,
    OpticalFlow,
}

/// Regularizer for the whole sequence: space-time differences for
/// `AnisoTv`, spatial differences over the motion rows for `OpticalFlow`.
pub fn build_theta(
    strategy: TemporalStrategy,
    nx: usize,
    ny: usize,
    nt: usize,
    motion: Option<MotionOperator>,
) -> Result<RegOperator> {
    match (strategy, motion) {
        (TemporalStrategy::AnisoTv, None) => RegOperator::new(RegKind::AnisoTv, nx, ny, nt),
        (TemporalStrategy::OpticalFlow, Some(m)) => {
            let spatial = FiniteDifferences::new(RegKind::Spatial2d, nx, ny, nt)?;
            Ok(RegOperator::OpticalFlow(VStack::new(spatial, m)?))
        }
        (TemporalStrategy::AnisoTv, Some(_)) => arg_err("space-time differences take no motion"),
        (TemporalStrategy::OpticalFlow, None) => arg_err("optical-flow regularizer needs a motion operator"),
    }
}

/// Motion-aware regularizer from forward velocities.
pub fn optical_flow_theta(velocity: &VelocityField, nt: usize) -> Result<(RegOperator, usize)> {
    if velocity.pairs.len() + 1 != nt {
        return dim_err("velocity field does not match the frame count");
    }
    let (m, clamped) = MotionOperator::new(velocity, &reverse_flow(velocity))?;
    Ok((build_theta(TemporalStrategy::OpticalFlow, velocity.nx, velocity.ny, nt, Some(m))?, clamped))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicConfig {
    pub strategy: TemporalStrategy,
    /// Velocities are re-estimated at outer iterations divisible by `tau`;
    /// `None` keeps the initial ones.
    pub tau: Option<usize>,
    pub of: OfConfig,
}

impl DynamicConfig {
    pub fn new(strategy: TemporalStrategy) -> Self {
        Self { strategy, tau: Some(1), of: OfConfig::default() }
    }
}

/// Regularizer source for the dynamic loop.
#[derive(Debug, Clone)]
pub struct TemporalRegularizer {
    nx: usize,
    ny: usize,
    nt: usize,
    cfg: DynamicConfig,
    op: RegOperator,
    /// Latest forward velocities (optical flow only).
    pub velocity: Option<VelocityField>,
    pub refreshes: usize,
    pub warp_clamped: usize,
}

impl TemporalRegularizer {
    pub fn new(nx: usize, ny: usize, nt: usize, cfg: DynamicConfig) -> Result<Self> {
        let (op, velocity, clamped) = match cfg.strategy {
            TemporalStrategy::AnisoTv => (build_theta(cfg.strategy, nx, ny, nt, None)?, None, 0),
            TemporalStrategy::OpticalFlow => {
                let v = VelocityField::zeros(nx, ny, nt.saturating_sub(1));
                let (op, c) = optical_flow_theta(&v, nt)?;
                (op, Some(v), c)
            }
        };
        Ok(Self { nx, ny, nt, cfg, op, velocity, refreshes: 0, warp_clamped: clamped })
    }
}

impl RegularizerSource for TemporalRegularizer {
    type Op = RegOperator;
    fn operator(&self) -> &RegOperator {
        &self.op
    }
    fn refresh(&mut self, k: usize, u: &[f64]) -> Result<bool> {
        if self.cfg.strategy == TemporalStrategy::AnisoTv {
            return Ok(false);
        }
        match self.cfg.tau {
            Some(t) if t > 0 && k % t == 0 => {}
            _ => return Ok(false),
        }
        let v = estimate_velocity(u, self.nx, self.ny, self.nt, &self.cfg.of)?;
        let (op, clamped) = optical_flow_theta(&v, self.nt)?;
        self.op = op;
        self.velocity = Some(v);
        self.refreshes += 1;
        self.warp_clamped += clamped;
        Ok(true)
    }
}

#[derive(Debug, Clone)]
pub struct DynamicOutput {
    pub nl: NlOutput,
    pub velocity: Option<VelocityField>,
    pub refreshes: usize,
}

/// Joint reconstruction of a frame sequence and shared geometry parameters.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_nl_rmmgks<F: ParametricFamily>(
    family: &F,
    seq: (usize, usize, usize),
    b: &[f64],
    start: NlStart,
    cfg: &NlConfig,
    dyn_cfg: &DynamicConfig,
    truth: Option<&[f64]>,
) -> Result<DynamicOutput> {
    let (nx, ny, nt) = seq;
    let mut reg = TemporalRegularizer::new(nx, ny, nt, *dyn_cfg)?;
    let mut cfg = cfg.clone();
    cfg.refresh_each_outer = dyn_cfg.strategy == TemporalStrategy::OpticalFlow;
    let mut nl = nl_drive(family, &mut reg, b, start, &cfg, truth)?;
    nl.diagnostics.warp_clamped += reg.warp_clamped as u32;
    Ok(DynamicOutput { nl, velocity: reg.velocity, refreshes: reg.refreshes })
}

/// Streaming dynamic reconstruction; velocities are estimated once at the
/// start of every block and held fixed inside it.
#[allow(clippy::too_many_arguments)]
pub fn s_dynamic_nl_rmmgks<F: BlockedFamily>(
    family: &F,
    seq: (usize, usize, usize),
    b: &[f64],
    start: NlStart,
    plan: &BlockPlan,
    cfg: &NlConfig,
    dyn_cfg: &DynamicConfig,
    max_passes: usize,
    truth: Option<&[f64]>,
) -> Result<(StreamOutput, Option<VelocityField>)> {
    let (nx, ny, nt) = seq;
    let mut reg = TemporalRegularizer::new(nx, ny, nt, *dyn_cfg)?;
    let mut cfg = cfg.clone();
    cfg.refresh_each_outer = dyn_cfg.strategy == TemporalStrategy::OpticalFlow;
    let mut out = s_nl_rmmgks(family, &mut reg, b, start, plan, &cfg, max_passes, truth)?;
    out.diagnostics.warp_clamped += reg.warp_clamped as u32;
    Ok((out, reg.velocity))
}

/// Linear dynamic reconstruction at known parameters with space-time
/// differences.
pub fn dynamic_rmmgks<F: ParametricFamily>(
    family: &F,
    p: &[f64],
    seq: (usize, usize, usize),
    b: &[f64],
    cfg: &RmmgksConfig,
) -> Result<RmmgksOutput> {
    let (nx, ny, nt) = seq;
    let op = family.build(p)?;
    let reg = FixedRegularizer(build_theta(TemporalStrategy::AnisoTv, nx, ny, nt, None)?);
    rmmgks(&op, reg.operator(), b, alloc::vec![0.0; op.cols()], None, cfg)
}
