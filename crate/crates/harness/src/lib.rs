//! Experiment harness for the nonlinear recycled MM-GKS solvers: phantoms,
//! noise, metrics, configuration, presets, output formats and the runner.

pub mod cli;
pub mod config;
pub mod metrics;
pub mod noise;
pub mod output;
pub mod phantom;
pub mod presets;
pub mod runner;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] nlgks_core::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
