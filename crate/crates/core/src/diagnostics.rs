//! Counters for recoverable numerical events. Solvers never abort on these;
//! they bump a counter and carry on with the documented fallback.

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Discrepancy target unattainable, boundary value returned.
    pub lambda_boundary: u32,
    /// Discrepancy bracketing failed, GCV used instead.
    pub lambda_gcv_fallback: u32,
    /// Stacked reduced matrix rank deficient, closest minimizer used.
    pub rank_deficient_solves: u32,
    /// Armijo backtracking exhausted, zero parameter step taken.
    pub line_search_exhausted: u32,
    /// Parameter update hit the admissible box.
    pub param_clamped: u32,
    /// Warped sample positions clamped to the image grid.
    pub warp_clamped: u32,
    /// Residual too small to expand the search space.
    pub expansion_skipped: u32,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.lambda_boundary += other.lambda_boundary;
        self.lambda_gcv_fallback += other.lambda_gcv_fallback;
        self.rank_deficient_solves += other.rank_deficient_solves;
        self.line_search_exhausted += other.line_search_exhausted;
        self.param_clamped += other.param_clamped;
        self.warp_clamped += other.warp_clamped;
        self.expansion_skipped += other.expansion_skipped;
    }
}
