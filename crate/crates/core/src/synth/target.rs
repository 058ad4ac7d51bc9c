use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::feeder::reinforce;
use super::{
    attach_ev_sessions, generate_baseline_profiles, generate_feeder, CongestionRule, ProfileSet, ScenarioParams,
    SynthError,
};
use crate::ac::{detect_congestion, loads_within_limits, solve_ac_pf, AcOptions};
use crate::linpf::{lin_pf_step, lin_step_violation, Limits, ThermalPolygon, Tightening};
use crate::milp::default_q;
use crate::net::{Feeder, Network};

/// Impedance factor of one reinforcement round.
pub const REINFORCE_FACTOR: f64 = 0.8;
pub const MAX_REINFORCEMENTS: u32 = 12;
/// Largest baseline scale tried when searching for congestion.
pub const MAX_SCALE: f64 = 64.0;

/// A generated feeder with its forecast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub feeder: Feeder,
    /// Forecast: scaled baseline plus EV sessions.
    pub profiles: ProfileSet,
    /// Factor applied to the baseline.
    pub scale: f64,
    /// Reinforcement rounds applied to the generated feeder.
    pub reinforcements: u32,
}

/// Demand with every user at the guaranteed power, split equally over its
/// phases.
pub fn all_guaranteed_loads(net: &Network, p_gtd_kw: f64) -> Vec<[Complex64; 3]> {
    let base_kva = net.feeder.base_power_va / 1000.0;
    net.feeder
        .users
        .iter()
        .map(|u| {
            let n = u.phases.len() as f64;
            let mut s = [Complex64::new(0.0, 0.0); 3];
            for p in u.phases.iter() {
                s[p.index()] = Complex64::new(p_gtd_kw, default_q(p_gtd_kw)) / (n * base_kva);
            }
            s
        })
        .collect()
}

/// Whether the all-guaranteed state meets the AC limits and the linear
/// limits tightened by `margin` on both voltage and thermal rows.
pub fn guaranteed_state_feasible(net: &Network, p_gtd_kw: f64, margin: f64) -> bool {
    let limits = Limits::from_network(net, 1);
    let loads = all_guaranteed_loads(net, p_gtd_kw);
    let tight = Tightening {
        voltage: margin,
        thermal: margin,
    };
    let step = lin_pf_step(net, &loads);
    loads_within_limits(net, &limits, &loads)
        && lin_step_violation(net, &limits, tight, ThermalPolygon::default(), &step) <= 0.0
}

/// Whether the AC power flow of `profiles` violates a limit; a failed
/// power flow counts as congested.
pub fn is_congested(net: &Network, profiles: &ProfileSet) -> Result<bool, SynthError> {
    let demand = profiles.to_demand(net)?;
    let limits = Limits::from_network(net, profiles.horizon);
    Ok(match solve_ac_pf(net, &demand, AcOptions::default()) {
        Ok(sol) if sol.converged => detect_congestion(net, &sol, &limits)
            .map(|r| !r.is_empty())
            .unwrap_or(true),
        _ => true,
    })
}

/// Enforces the congestion target on a generated feeder and its baseline
/// and EV profiles:
/// 1. reinforce the feeder until every user at guaranteed power is
///    feasible with `reserve_margin` of tightening;
/// 2. find the smallest baseline scale `k*` at which the forecast
///    `k * baseline + ev` is AC-congested and use `severity * k*`
///    (scale 1 if EV charging alone congests the feeder).
pub fn congestion_target(
    feeder: &Feeder,
    baseline: &ProfileSet,
    ev: &ProfileSet,
    params: &ScenarioParams,
) -> Result<Scenario, SynthError> {
    let mut feeder = feeder.clone();
    let mut net = Network::new(feeder.clone()).map_err(|e| SynthError::Params(e.to_string()))?;
    let mut rounds = 0;
    while !guaranteed_state_feasible(&net, params.p_gtd_kw, params.reserve_margin) {
        if rounds == MAX_REINFORCEMENTS {
            return Err(SynthError::Target(format!(
                "guaranteed power {} kW stays infeasible after {rounds} reinforcements",
                params.p_gtd_kw
            )));
        }
        rounds += 1;
        feeder = reinforce(&feeder, REINFORCE_FACTOR);
        net = Network::new(feeder.clone()).map_err(|e| SynthError::Params(e.to_string()))?;
    }
    let at = |k: f64| baseline.scaled_plus(k, ev);
    let scale = if is_congested(&net, &at(0.0))? {
        1.0
    } else {
        let mut hi = 1.0;
        while !is_congested(&net, &at(hi))? {
            hi *= 2.0;
            if hi > MAX_SCALE {
                return Err(SynthError::Target("forecast stays uncongested at every scale".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if is_congested(&net, &at(mid))? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let k = hi * params.congestion_severity;
        if is_congested(&net, &at(k))? {
            k
        } else {
            hi
        }
    };
    Ok(Scenario {
        params: params.clone(),
        feeder,
        profiles: at(scale),
        scale,
        reinforcements: rounds,
    })
}

/// Feeder, baseline, EV sessions and congestion target in one call.
pub fn generate_scenario(params: &ScenarioParams) -> Result<Scenario, SynthError> {
    let feeder = generate_feeder(params)?;
    let baseline = generate_baseline_profiles(&feeder, params)?;
    let with_ev = attach_ev_sessions(&baseline, &feeder, params)?;
    match params.congestion_target {
        CongestionRule::None => Ok(Scenario {
            params: params.clone(),
            feeder,
            profiles: with_ev,
            scale: 1.0,
            reinforcements: 0,
        }),
        CongestionRule::Rescale => {
            let ev = baseline.scaled_plus(-1.0, &with_ev);
            congestion_target(&feeder, &baseline, &ev, params)
        }
    }
}
