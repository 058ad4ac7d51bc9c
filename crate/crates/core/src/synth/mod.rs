//! Synthetic feeders, household profiles and EV charging sessions, plus the
//! profile CSV format.

mod ev;
mod feeder;
mod params;
mod profiles;
mod target;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use ev::{attach_ev_sessions, draw_ev_sessions, EvSession};
pub use feeder::{generate_feeder, reinforce, SOURCE_BUS};
pub use params::{CongestionRule, EvPhasePolicy, ScenarioParams};
pub use profiles::{generate_baseline_profiles, load_profiles, ProfileSet};
pub use target::{
    all_guaranteed_loads, congestion_target, generate_scenario, guaranteed_state_feasible, is_congested, Scenario,
    MAX_REINFORCEMENTS, MAX_SCALE, REINFORCE_FACTOR,
};

use crate::net::Phase;

const STREAM_FEEDER: u64 = 1;
const STREAM_PROFILES: u64 = 2;
const STREAM_EV: u64 = 3;

/// Independent random stream per generator stage.
fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("profile data: {0}")]
    Profile(String),
    #[error("duplicate profile row t={t} user='{user}' phase={phase}")]
    Duplicate { t: usize, user: String, phase: Phase },
    #[error("profile user '{0}' is not on the feeder")]
    UnknownUser(String),
    #[error("congestion target: {0}")]
    Target(String),
    #[error("I/O: {0}")]
    Io(String),
}

impl From<csv::Error> for SynthError {
    fn from(e: csv::Error) -> Self {
        SynthError::Profile(e.to_string())
    }
}
