//! Radial three-phase feeder model: buses, branches, user attachments and
//! the structural checks every downstream computation relies on.

mod builder;
mod feeder;
mod io;
mod phase;
mod units;

use thiserror::Error;

pub use builder::FeederBuilder;
pub use feeder::{
    radial_ordering, validate_feeder, Branch, Bus, Feeder, Issue, IssueKind, Network, PhaseMatrix, UserAttachment,
    ValidationReport,
};
pub use io::{feeder_to_json, load_feeder, parse_feeder_json, save_feeder, FeederFile};
pub use phase::{Phase, PhaseSet};
pub use units::{per_unit_convert, to_physical, Base, PhysicalBranch};

/// Default lower voltage magnitude bound applied to non-source buses.
pub const DEFAULT_VMIN_PU: f64 = 0.9;
/// Default upper voltage magnitude bound applied to non-source buses.
pub const DEFAULT_VMAX_PU: f64 = 1.1;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid feeder:\n{0}")]
    Invalid(ValidationReport),
    #[error("non-radial: {0}")]
    NonRadial(String),
    #[error("non-positive base ({voltage_v} V, {power_va} VA)")]
    Base { voltage_v: f64, power_va: f64 },
    #[error("feeder format: {0}")]
    Format(String),
    #[error("feeder io: {0}")]
    Io(String),
}
