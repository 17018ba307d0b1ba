//! Streaming reconstruction: measurement units are split into blocks that
//! are processed one at a time, carrying the image, the parameters and the
//! compressed basis from block to block.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::Diagnostics;
use crate::error::{arg_err, Result};
use crate::linalg::{relative_change, Basis};
use crate::nonlinear::{drive_blocks, BlockData, NlConfig, NlStart, OuterRecord, RegularizerSource};
#[cfg(test)]
use crate::nonlinear::FixedRegularizer;
use crate::operators::{BlockedFamily, LinearOperator};
use crate::recycling::{rmmgks, RmmgksConfig};

/// Partition of measurement units into blocks. Units are permuted with a
/// seeded generator, cut into near-equal chunks, and each chunk is sorted
/// so rows keep their original order inside a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    pub n_units: usize,
    pub seed: u64,
    pub blocks: Vec<Vec<usize>>,
}

impl BlockPlan {
    pub fn new(n_units: usize, n_blocks: usize, seed: u64) -> Result<Self> {
        if n_blocks == 0 || n_blocks > n_units {
            return arg_err("number of blocks must be between 1 and the number of units");
        }
        let mut order: Vec<usize> = (0..n_units).collect();
        if n_blocks > 1 {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let mut blocks = Vec::with_capacity(n_blocks);
        let (q, r) = (n_units / n_blocks, n_units % n_blocks);
        let mut at = 0;
        for j in 0..n_blocks {
            let len = q + usize::from(j < r);
            let mut blk = order[at..at + len].to_vec();
            blk.sort_unstable();
            blocks.push(blk);
            at += len;
        }
        Ok(Self { n_units, seed, blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Peak storage seen during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryLedger {
    /// Widest search space of the primary solver.
    pub peak_basis_columns: usize,
    /// Widest search space of the auxiliary high-regularization solver.
    pub peak_aux_basis_columns: usize,
    pub peak_operator_rows: usize,
    pub peak_operator_units: usize,
}

impl MemoryLedger {
    pub fn observe(&mut self, basis: usize, aux: usize, rows: usize, units: usize) {
        self.peak_basis_columns = self.peak_basis_columns.max(basis);
        self.peak_aux_basis_columns = self.peak_aux_basis_columns.max(aux);
        self.peak_operator_rows = self.peak_operator_rows.max(rows);
        self.peak_operator_units = self.peak_operator_units.max(units);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub pass: usize,
    pub block: usize,
    pub p: Vec<f64>,
    pub lambda: f64,
    pub rre: Option<f64>,
    pub outer_iterations: usize,
    pub history: Vec<OuterRecord>,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub basis: Basis,
    pub blocks: Vec<BlockRecord>,
    pub passes: usize,
    pub converged: bool,
    pub ledger: MemoryLedger,
    pub diagnostics: Diagnostics,
}

/// Streaming recycled MM-GKS at fixed parameters `p`.
pub fn s_rmmgks<F: BlockedFamily, R: LinearOperator>(
    family: &F,
    reg: &R,
    b: &[f64],
    p: &[f64],
    plan: &BlockPlan,
    cfg: &RmmgksConfig,
    truth: Option<&[f64]>,
) -> Result<StreamOutput> {
    let n = family.build(p)?.cols();
    let mut u = crate::nonlinear::zeros(n);
    let mut basis = None;
    let mut out_blocks = Vec::new();
    let mut ledger = MemoryLedger::default();
    let mut diagnostics = Diagnostics::default();
    for (j, units) in plan.blocks.iter().enumerate() {
        let fam = family.restrict(units)?;
        let bj = family.gather(b, units);
        let op = fam.build(p)?;
        let mut c = *cfg;
        c.policy = cfg.policy.restricted(bj.len(), b.len());
        let out = rmmgks(&op, reg, &bj, u, basis.take(), &c)?;
        ledger.observe(out.state.peak_width(), 0, bj.len(), units.len());
        diagnostics.merge(&out.state.diagnostics);
        out_blocks.push(BlockRecord {
            pass: 0,
            block: j,
            p: p.to_vec(),
            lambda: out.lambda,
            rre: truth.map(|t| relative_change(&out.u, t)),
            outer_iterations: out.cycles.len(),
            history: Vec::new(),
        });
        u = out.u;
        basis = Some(out.basis);
    }
    Ok(StreamOutput {
        u,
        p: p.to_vec(),
        basis: basis.unwrap_or_else(|| Basis::empty(n)),
        blocks: out_blocks,
        passes: 1,
        converged: true,
        ledger,
        diagnostics,
    })
}

/// Streaming joint reconstruction. Each block gets one outer step (image
/// solve, optional auxiliary solve, one parameter update) from the carried
/// image, parameters and basis. Passes over all blocks repeat until the
/// image and parameters change less than the outer tolerances from one
/// pass to the next, or `max_passes` is reached.
pub fn s_nl_rmmgks<F: BlockedFamily, R: RegularizerSource>(
    family: &F,
    reg_src: &mut R,
    b: &[f64],
    start: NlStart,
    plan: &BlockPlan,
    cfg: &NlConfig,
    max_passes: usize,
    truth: Option<&[f64]>,
) -> Result<StreamOutput> {
    s_nl_rmmgks_observed(family, reg_src, b, start, plan, cfg, max_passes, truth, &mut |_, _| {})
}

/// [`s_nl_rmmgks`] with a callback after every block step.
#[allow(clippy::too_many_arguments)]
pub fn s_nl_rmmgks_observed<F: BlockedFamily, R: RegularizerSource>(
    family: &F,
    reg_src: &mut R,
    b: &[f64],
    start: NlStart,
    plan: &BlockPlan,
    cfg: &NlConfig,
    max_passes: usize,
    truth: Option<&[f64]>,
    observe: &mut dyn FnMut(&OuterRecord, &[f64]),
) -> Result<StreamOutput> {
    let mut data = Vec::with_capacity(plan.len());
    for units in &plan.blocks {
        let bj = family.gather(b, units);
        let policy = cfg.policy.restricted(bj.len(), b.len());
        data.push((family.restrict(units)?, bj, policy));
    }
    let blocks: Vec<BlockData<'_, F>> =
        data.iter().map(|(f, bj, policy)| BlockData { family: f, b: bj, policy: *policy }).collect();
    let out = drive_blocks(&blocks, reg_src, start, cfg, max_passes, truth, observe)?;
    let mut ledger = MemoryLedger::default();
    for ((_, bj, _), units) in data.iter().zip(&plan.blocks) {
        ledger.observe(out.peak_width, out.peak_aux_width, bj.len(), units.len());
    }
    let records = out
        .history
        .iter()
        .map(|h| BlockRecord {
            pass: h.pass,
            block: h.block,
            p: h.p.clone(),
            lambda: h.lambda,
            rre: h.rre,
            outer_iterations: 1,
            history: alloc::vec![h.clone()],
        })
        .collect();
    Ok(StreamOutput {
        u: out.u,
        p: out.p,
        basis: out.basis,
        blocks: records,
        passes: out.passes,
        converged: out.converged,
        ledger,
        diagnostics: out.diagnostics,
    })
}
