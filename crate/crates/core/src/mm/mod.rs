//! Two-block majorization-minimization: one block on Gr(N, D), one in a
//! closed convex set. Includes sampled audits of the surrogate conditions
//! and finite-difference stationarity probes.

mod audit;
mod engine;
mod problem;
mod stationarity;
mod subspace_mean;

pub use audit::{
    audit_derivative_match, audit_homogeneity, audit_majorization, audit_quasiconvexity,
    audit_tightness, AuditConfig, AuditKind, AuditResult, AuditThresholds, FD_STEPS,
};
pub use engine::{
    run_block_mm, AuditSummary, ConvergenceReport, IterationRecord, IterationTrace, SolverConfig,
    MONOTONE_SLACK,
};
pub use problem::{
    fd_gradient_norms, Block, BlockProblem, Dims, FnProblem, FnSurrogate, Iterate, Surrogate,
};
pub use stationarity::{
    stationarity_check, StationarityScore, STATIONARITY_STEP, STATIONARITY_THRESHOLD,
};
pub use subspace_mean::{builtin_subspace_plus_mean, subspace_mean_data, SubspaceMeanProblem};

use thiserror::Error;

use crate::deconv::DeconvError;
use crate::grassmann::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MmError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Deconv(#[from] DeconvError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("{block} surrogate returned an infeasible value at iteration {iteration}: {reason}")]
    InfeasibleBlock { block: Block, iteration: usize, reason: String },
    #[error("cost increased by {increase:e} in the {block} update at iteration {iteration}")]
    MonotonicityViolation { block: Block, iteration: usize, increase: f64 },
    #[error("cost is not finite at iteration {iteration}")]
    NonFiniteCost { iteration: usize },
}
