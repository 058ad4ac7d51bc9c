use num_complex::Complex64;

use super::feeder::{Branch, Bus, Feeder, PhaseMatrix, UserAttachment};
use super::phase::PhaseSet;
use super::{DEFAULT_VMAX_PU, DEFAULT_VMIN_PU};

/// Incremental construction of small feeders in per unit. Buses get the
/// default voltage band; branches get a diagonal impedance.
#[derive(Clone, Debug)]
pub struct FeederBuilder {
    feeder: Feeder,
}

impl FeederBuilder {
    pub fn new(base_voltage_v: f64, base_power_va: f64) -> Self {
        FeederBuilder {
            feeder: Feeder {
                buses: Vec::new(),
                branches: Vec::new(),
                users: Vec::new(),
                base_voltage_v,
                base_power_va,
            },
        }
    }

    pub fn source(mut self, id: &str) -> Self {
        self.feeder.buses.push(Bus {
            id: id.into(),
            phases: PhaseSet::ABC,
            vmin_pu: DEFAULT_VMIN_PU,
            vmax_pu: DEFAULT_VMAX_PU,
            is_source: true,
        });
        self
    }

    pub fn bus(mut self, id: &str, phases: PhaseSet) -> Self {
        self.feeder.buses.push(Bus {
            id: id.into(),
            phases,
            vmin_pu: DEFAULT_VMIN_PU,
            vmax_pu: DEFAULT_VMAX_PU,
            is_source: false,
        });
        self
    }

    pub fn branch(mut self, from: &str, to: &str, phases: PhaseSet, z: Complex64, s_rated_pu: f64) -> Self {
        self.feeder.branches.push(Branch {
            from: from.into(),
            to: to.into(),
            phases,
            z: PhaseMatrix::diagonal(phases, z),
            s_rated_pu,
        });
        self
    }

    /// Bus plus the branch feeding it, in one step.
    pub fn line(self, from: &str, to: &str, phases: PhaseSet, z: Complex64, s_rated_pu: f64) -> Self {
        self.bus(to, phases).branch(from, to, phases, z, s_rated_pu)
    }

    pub fn user(mut self, user_id: &str, bus_id: &str, phases: PhaseSet) -> Self {
        self.feeder.users.push(UserAttachment {
            user_id: user_id.into(),
            bus_id: bus_id.into(),
            phases,
        });
        self
    }

    pub fn build(self) -> Feeder {
        self.feeder
    }
}
