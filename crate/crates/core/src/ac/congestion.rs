use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::pf::{solve_ac_step, AcOptions, AcPfSolution, AcStep};
use super::AcError;
use crate::linpf::Limits;
use crate::net::{Network, Phase};

/// Slack below which a limit counts as violated, absorbing round-off.
pub const LIMIT_TOL: f64 = 1e-9;

/// Voltage-limit event; `margin = |V| - limit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageEvent {
    pub bus: usize,
    pub phase: Phase,
    pub t: usize,
    pub magnitude: f64,
    pub margin: f64,
}

/// Thermal event; `margin = |S| - rating`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalEvent {
    pub branch: usize,
    pub phase: Phase,
    pub t: usize,
    pub apparent: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CongestionReport {
    pub undervoltage: Vec<VoltageEvent>,
    pub overvoltage: Vec<VoltageEvent>,
    pub overcurrent: Vec<ThermalEvent>,
    /// Smallest distance inside the voltage band over all buses (negative
    /// when violated).
    pub worst_voltage_headroom: f64,
    /// Smallest `rating - |S|` over all branches.
    pub worst_thermal_headroom: f64,
}

impl CongestionReport {
    pub fn is_empty(&self) -> bool {
        self.undervoltage.is_empty() && self.overvoltage.is_empty() && self.overcurrent.is_empty()
    }

    pub fn has_voltage_events(&self) -> bool {
        !self.undervoltage.is_empty() || !self.overvoltage.is_empty()
    }

    fn add_step(&mut self, net: &Network, limits: &Limits, t: usize, step: &AcStep) {
        for bus in 0..net.n_buses() {
            if bus == net.source {
                continue;
            }
            for phase in net.energized(bus).iter() {
                let m = step.v[bus][phase.index()].norm();
                let (lo, hi) = (limits.vmin[bus], limits.vmax[bus]);
                self.worst_voltage_headroom = self.worst_voltage_headroom.min(m - lo).min(hi - m);
                if m < lo - LIMIT_TOL {
                    self.undervoltage.push(VoltageEvent {
                        bus,
                        phase,
                        t,
                        magnitude: m,
                        margin: m - lo,
                    });
                }
                if m > hi + LIMIT_TOL {
                    self.overvoltage.push(VoltageEvent {
                        bus,
                        phase,
                        t,
                        magnitude: m,
                        margin: m - hi,
                    });
                }
            }
        }
        for branch in 0..net.n_branches() {
            let rating = limits.s_rated[branch];
            for phase in net.branch(branch).phases.iter() {
                let a = step.s_flow[branch][phase.index()].norm();
                self.worst_thermal_headroom = self.worst_thermal_headroom.min(rating - a);
                if a > rating + LIMIT_TOL {
                    self.overcurrent.push(ThermalEvent {
                        branch,
                        phase,
                        t,
                        apparent: a,
                        margin: a - rating,
                    });
                }
            }
        }
    }
}

fn empty_report() -> CongestionReport {
    CongestionReport {
        worst_voltage_headroom: f64::INFINITY,
        worst_thermal_headroom: f64::INFINITY,
        ..Default::default()
    }
}

/// Every voltage-band and thermal violation of a converged AC solution.
pub fn detect_congestion(net: &Network, sol: &AcPfSolution, limits: &Limits) -> Result<CongestionReport, AcError> {
    if !sol.converged {
        return Err(AcError::Unconverged);
    }
    if sol.steps.len() != limits.horizon {
        return Err(AcError::Dimension(format!(
            "solution spans {} steps, limits {}",
            sol.steps.len(),
            limits.horizon
        )));
    }
    let mut report = empty_report();
    for (t, step) in sol.steps.iter().enumerate() {
        report.add_step(net, limits, t, step);
    }
    Ok(report)
}

/// Whether the demands `loads` at one timestep meet every AC limit; a
/// failed power flow counts as a violation.
pub fn loads_within_limits(net: &Network, limits: &Limits, loads: &[[Complex64; 3]]) -> bool {
    match solve_ac_step(net, loads, AcOptions::default()) {
        Ok(step) => {
            let mut r = empty_report();
            r.add_step(net, limits, 0, &step);
            r.is_empty()
        }
        Err(_) => false,
    }
}
