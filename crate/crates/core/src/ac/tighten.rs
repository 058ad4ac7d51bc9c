use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::congestion::{detect_congestion, CongestionReport};
use super::pf::{solve_ac_pf, AcOptions};
use super::AcError;
use crate::demand::Demand;
use crate::linpf::{Limits, ThermalPolygon, Tightening};
use crate::milp::{build_milp, solve_milp, Contract, MilpOutcome, ModelSpec, Schedule, SolveOptions};
use crate::net::Network;

/// Default tightening grid: 0 to 0.03 in steps of 0.0025.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=12).map(|k| k as f64 * 0.0025).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Timeout,
    /// Not solved: infeasible at a smaller tightening already.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TighteningStep {
    pub delta: f64,
    pub tightening: Tightening,
    pub milp: MilpStatus,
    pub objective: Option<u64>,
    pub nodes: usize,
    /// AC check of the schedule against the original limits.
    pub ac_feasible: bool,
    pub undervoltage_events: usize,
    pub overvoltage_events: usize,
    pub overcurrent_events: usize,
    /// AC power flow failure, if any.
    pub ac_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TighteningResult {
    /// Smallest tested tightening whose schedule is AC-feasible; `None`
    /// when the grid is exhausted.
    pub delta_star: Option<f64>,
    pub schedule: Option<Schedule>,
    pub voltage_tightened: bool,
    pub thermal_tightened: bool,
    pub trace: Vec<TighteningStep>,
}

impl TighteningResult {
    pub fn is_exhausted(&self) -> bool {
        self.delta_star.is_none()
    }
}

fn ac_check(net: &Network, limits: &Limits, demand: &Demand) -> (Option<CongestionReport>, Option<String>) {
    match solve_ac_pf(net, demand, AcOptions::default()) {
        Ok(sol) => match detect_congestion(net, &sol, limits) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        },
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Solves the schedule for each tightening on `grid` (ascending, starting
/// at zero) and returns the first whose AC power flow meets the original
/// limits. Only the limit types violated at zero tightening are tightened:
/// the voltage floor is raised by the tightening, thermal ratings scaled by
/// one minus it. A failed AC power flow at zero tightens both. The time
/// limit of `opts` bounds the whole loop; steps past it are timeouts.
pub fn tighten_and_resolve(
    net: &Network,
    forecast: &Demand,
    contracts: &[Contract],
    limits: &Limits,
    grid: &[f64],
    polygon: ThermalPolygon,
    opts: &SolveOptions,
) -> Result<TighteningResult, AcError> {
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AcError::Grid);
    }
    let mut result = TighteningResult {
        delta_star: None,
        schedule: None,
        voltage_tightened: false,
        thermal_tightened: false,
        trace: Vec::new(),
    };
    let mut infeasible_from: Option<usize> = None;
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    for (k, &delta) in grid.iter().enumerate() {
        let tightening = Tightening {
            voltage: if result.voltage_tightened { delta } else { 0.0 },
            thermal: if result.thermal_tightened { delta } else { 0.0 },
        };
        let mut step = TighteningStep {
            delta,
            tightening,
            milp: MilpStatus::Skipped,
            objective: None,
            nodes: 0,
            ac_feasible: false,
            undervoltage_events: 0,
            overvoltage_events: 0,
            overcurrent_events: 0,
            ac_error: None,
        };
        if infeasible_from.is_some() {
            result.trace.push(step);
            continue;
        }
        let left = deadline.map(|d| d.saturating_duration_since(Instant::now()));
        if left.is_some_and(|l| l.is_zero()) {
            step.milp = MilpStatus::Timeout;
            result.trace.push(step);
            break;
        }
        let step_opts = SolveOptions {
            time_limit: left,
            ..opts.clone()
        };
        let model = build_milp(net, forecast, contracts, limits, ModelSpec { tightening, polygon })?;
        let solved = solve_milp(&model, &step_opts)?;
        step.nodes = solved.stats.nodes;
        let schedule = match solved.outcome {
            MilpOutcome::Optimal(s) => {
                step.milp = MilpStatus::Optimal;
                s
            }
            MilpOutcome::Infeasible(_) => {
                step.milp = MilpStatus::Infeasible;
                infeasible_from = Some(k);
                result.trace.push(step);
                continue;
            }
            MilpOutcome::Timeout { .. } => {
                step.milp = MilpStatus::Timeout;
                result.trace.push(step);
                break;
            }
        };
        step.objective = Some(schedule.objective);
        let (report, err) = ac_check(net, limits, &schedule.demand);
        step.ac_error = err;
        if let Some(r) = &report {
            step.undervoltage_events = r.undervoltage.len();
            step.overvoltage_events = r.overvoltage.len();
            step.overcurrent_events = r.overcurrent.len();
            step.ac_feasible = r.is_empty();
        }
        if k == 0 {
            match &report {
                Some(r) => {
                    result.voltage_tightened = !r.undervoltage.is_empty();
                    result.thermal_tightened = !r.overcurrent.is_empty();
                }
                None => {
                    result.voltage_tightened = true;
                    result.thermal_tightened = true;
                }
            }
        }
        let feasible = step.ac_feasible;
        result.trace.push(step);
        if feasible {
            result.delta_star = Some(delta);
            result.schedule = Some(schedule);
            break;
        }
        if !result.voltage_tightened && !result.thermal_tightened {
            // only over-voltage remains: no tightening applies
            break;
        }
    }
    Ok(result)
}
