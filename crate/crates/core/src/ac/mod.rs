//! Exact three-phase AC power flow for radial feeders, congestion
//! detection, and the bound-tightening loop that makes linear-model
//! schedules AC-feasible.

mod congestion;
mod gap;
mod pf;
mod tighten;

use thiserror::Error;

pub use congestion::{detect_congestion, loads_within_limits, CongestionReport, ThermalEvent, VoltageEvent, LIMIT_TOL};
pub use gap::{lin_vs_ac_gap, GapSummary};
pub use pf::{
    kirchhoff_mismatch, solve_ac_pf, solve_ac_step, source_phasor, AcOptions, AcPfSolution, AcStep, COLLAPSE_PU,
};
pub use tighten::{default_delta_grid, tighten_and_resolve, MilpStatus, TighteningResult, TighteningStep};

use crate::milp::MilpError;

#[derive(Debug, Error, PartialEq)]
pub enum AcError {
    #[error("power flow did not converge (residual {residual:e}){}", at_suffix(*t))]
    NonConvergence { t: Option<usize>, residual: f64 },
    #[error("voltage collapse at iteration {iteration}{}", at_suffix(*t))]
    Collapse { t: Option<usize>, iteration: usize },
    #[error("power flow solution is not converged")]
    Unconverged,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("tightening grid must be ascending and start at 0")]
    Grid,
    #[error(transparent)]
    Milp(#[from] MilpError),
}

fn at_suffix(t: Option<usize>) -> String {
    t.map(|t| format!(" at t={t}")).unwrap_or_default()
}

impl AcError {
    pub(crate) fn at(self, t: usize) -> Self {
        match self {
            AcError::NonConvergence { residual, .. } => AcError::NonConvergence { t: Some(t), residual },
            AcError::Collapse { iteration, .. } => AcError::Collapse { t: Some(t), iteration },
            e => e,
        }
    }
}

impl From<crate::linpf::LinPfError> for AcError {
    fn from(e: crate::linpf::LinPfError) -> Self {
        AcError::Milp(MilpError::LinPf(e))
    }
}
