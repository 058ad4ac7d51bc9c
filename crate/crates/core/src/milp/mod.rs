//! Multi-period demand-reduction scheduling: contracts and comfort rows,
//! model assembly, an exact projection onto the binaries, branch-and-bound,
//! and an exhaustive oracle for small instances.

mod bnb;
mod brute;
mod contract;
mod io;
mod model;
mod reduced;
mod relax;
mod runs;
mod schedule;

use thiserror::Error;

pub use bnb::{
    network_violation, solve_milp, Infeasibility, MilpOutcome, MilpResult, SolveOptions, SolveStats, ROW_TOL,
};
pub use brute::{
    brute_force_schedule, comfort_ok_by_runs, relative_objective_error, BruteForce, Checker, DEFAULT_BRUTE_FORCE_CAP,
};
pub use contract::{
    default_q, preset_by_name, preset_modalities, Contract, ModalityPreset, DEFAULT_POWER_FACTOR, PRESET_NAMES,
};
pub use io::{export_lp, import_solution};
pub use model::{
    align_contracts, build_milp, comfort_rows, guaranteed_per_phase, user_response_rows, MilpModel, ModelSpec,
};
pub use relax::{full_lp_relaxation, lp_relax_solve, CertificateRow, FarkasCertificate, LpRelaxation};
pub use schedule::{canonical_transitions, verify_schedule, ComfortViolation, Schedule};

use crate::linpf::LinPfError;

#[derive(Debug, Error, PartialEq)]
pub enum MilpError {
    #[error("invalid contract: {0}")]
    Contract(String),
    #[error("no contract for user '{0}'")]
    MissingContract(String),
    #[error("step of {0} min does not divide one hour")]
    Step(u32),
    #[error("unknown modality '{0}'")]
    Modality(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    LinPf(#[from] LinPfError),
    #[error("instance has {size} user-steps, above the exhaustive-search cap {cap}")]
    Cap { size: usize, cap: usize },
    #[error("binary count must be positive, got {0}")]
    Beta(i64),
    #[error("solution import: {0}")]
    Import(String),
    #[error("LP solver: {0}")]
    Lp(String),
    #[error("internal: {0}")]
    Internal(String),
}
