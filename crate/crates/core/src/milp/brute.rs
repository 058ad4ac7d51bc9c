use super::contract::Contract;
use super::model::{build_milp, ModelSpec};
use super::schedule::Schedule;
use super::MilpError;
use crate::demand::Demand;
use crate::linpf::{lin_pf_step, lin_step_violation, Limits};
use crate::net::Network;

/// Default bound on users times timesteps for exhaustive search.
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 20;

/// Power-flow model used to accept a candidate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Checker {
    /// Linear model limits (voltage band and thermal polygon), tolerance 1e-9.
    Lin,
    /// Exact AC power flow against untightened limits.
    Ac,
}

#[derive(Clone, Debug)]
pub struct BruteForce {
    /// Cheapest feasible schedule; `None` when no assignment is feasible.
    pub schedule: Option<Schedule>,
    /// Number of activation patterns covered by the search.
    pub enumerated: u64,
}

/// Whether the activation pattern `s` honours `c`, judged on its reduction
/// actions (maximal runs of ones) rather than on the model rows.
pub fn comfort_ok_by_runs(s: &[u8], c: &Contract) -> bool {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < s.len() {
        if s[t] == 1 {
            let start = t;
            while t < s.len() && s[t] == 1 {
                t += 1;
            }
            runs.push((start, t - 1));
        } else {
            t += 1;
        }
    }
    if c.eta.is_some_and(|eta| runs.len() > eta as usize) {
        return false;
    }
    if let Some(alpha) = c.alpha_steps {
        if runs.iter().any(|&(a, b)| b - a + 1 > alpha as usize) {
            return false;
        }
    }
    // a run ending at `b` is released at `b + 1`; the next may start only
    // strictly more than delta steps later
    runs.windows(2).all(|w| w[1].0 - (w[0].1 + 1) > c.delta_steps as usize)
}

/// Exhaustive search over all activation patterns. Comfort feasibility is
/// judged per user on reduction actions; network feasibility per timestep
/// with `checker`.
pub fn brute_force_schedule(
    net: &Network,
    forecast: &Demand,
    contracts: &[Contract],
    limits: &Limits,
    spec: ModelSpec,
    checker: Checker,
    cap: usize,
) -> Result<BruteForce, MilpError> {
    let n = net.n_users();
    let horizon = forecast.horizon();
    if n * horizon > cap {
        return Err(MilpError::Cap { size: n * horizon, cap });
    }
    let model = build_milp(net, forecast, contracts, limits, spec)?;

    let bits = |m: u32| (0..horizon).map(|t| ((m >> t) & 1) as u8).collect::<Vec<u8>>();
    let trajectories: Vec<Vec<u32>> = model
        .contracts
        .iter()
        .map(|c| {
            (0..1u32 << horizon)
                .filter(|&m| comfort_ok_by_runs(&bits(m), c))
                .collect()
        })
        .collect();

    // feasible column patterns per timestep
    let mut column_ok = vec![vec![false; 1 << n]; horizon];
    for (t, ok) in column_ok.iter_mut().enumerate() {
        for (mask, slot) in ok.iter_mut().enumerate() {
            let mut loads = forecast.at(t);
            for u in 0..n {
                if (mask >> u) & 1 == 1 {
                    for p in net.user(u).phases.iter() {
                        loads[u][p.index()] = model.gtd[u][p.index()];
                    }
                }
            }
            *slot = match checker {
                Checker::Lin => {
                    let step = lin_pf_step(net, &loads);
                    lin_step_violation(net, limits, spec.tightening, spec.polygon, &step) <= 1e-9
                }
                Checker::Ac => crate::ac::loads_within_limits(net, limits, &loads),
            };
        }
    }

    let mut best: Option<(u32, Vec<u32>)> = None;
    if trajectories.iter().all(|t| !t.is_empty()) {
        let mut idx = vec![0usize; n];
        loop {
            let pick: Vec<u32> = (0..n).map(|u| trajectories[u][idx[u]]).collect();
            let cost: u32 = pick.iter().map(|m| m.count_ones()).sum();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                let feasible = (0..horizon).all(|t| {
                    let col = (0..n).fold(0usize, |acc, u| acc | ((((pick[u] >> t) & 1) as usize) << u));
                    column_ok[t][col]
                });
                if feasible {
                    best = Some((cost, pick));
                }
            }
            // odometer over per-user trajectories
            let mut u = 0;
            loop {
                if u == n {
                    break;
                }
                idx[u] += 1;
                if idx[u] < trajectories[u].len() {
                    break;
                }
                idx[u] = 0;
                u += 1;
            }
            if u == n {
                break;
            }
        }
    }
    let schedule = best.map(|(_, pick)| model.schedule_from_s(pick.into_iter().map(bits).collect()));
    Ok(BruteForce {
        schedule,
        enumerated: 1u64 << (n * horizon),
    })
}

/// Relative objective error `|a - b| / beta`.
pub fn relative_objective_error(a: i64, b: i64, beta: i64) -> Result<f64, MilpError> {
    if beta <= 0 {
        return Err(MilpError::Beta(beta));
    }
    Ok((a - b).abs() as f64 / beta as f64)
}
