use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::contract::Contract;
use super::schedule::{canonical_transitions, Schedule};
use super::MilpError;
use crate::demand::Demand;
use crate::linpf::{
    build_balance, build_limits, build_ohm, check_limits, evaluate_lin_pf, fill_assignment, Limits, ThermalPolygon,
    Tightening,
};
use crate::lp::{LinearConstraintBlock, LinearProgram, RowTag, Sense, VarKey, VarRegistry};
use crate::net::Network;

/// Limit handling inside the linear model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub tightening: Tightening,
    pub polygon: ThermalPolygon,
}

/// Contracts in network user order, looked up by user id.
pub fn align_contracts(net: &Network, contracts: &[Contract]) -> Result<Vec<Contract>, MilpError> {
    net.feeder
        .users
        .iter()
        .map(|u| {
            let c = contracts
                .iter()
                .find(|c| c.user_id == u.user_id)
                .ok_or_else(|| MilpError::MissingContract(u.user_id.clone()))?;
            c.validate()?;
            Ok(c.clone())
        })
        .collect()
}

/// Per-phase guaranteed power in p.u., split equally over attachment phases.
pub fn guaranteed_per_phase(net: &Network, contracts: &[Contract]) -> Vec<[Complex64; 3]> {
    let base_kva = net.feeder.base_power_va / 1000.0;
    contracts
        .iter()
        .enumerate()
        .map(|(u, c)| {
            let phases = net.user(u).phases;
            let n = phases.len().max(1) as f64;
            let mut g = [Complex64::new(0.0, 0.0); 3];
            for p in phases.iter() {
                g[p.index()] = Complex64::new(c.p_gtd_kw / n, c.q_gtd_kvar / n) / base_kva;
            }
            g
        })
        .collect()
}

fn check_demand(net: &Network, forecast: &Demand) -> Result<(), MilpError> {
    if forecast.n_users() != net.n_users() {
        return Err(MilpError::Dimension(format!(
            "profiles cover {} users, feeder has {}",
            forecast.n_users(),
            net.n_users()
        )));
    }
    Ok(())
}

/// Demand response rows: per user, attachment phase and timestep,
/// `P = s P_gtd + (1 - s) P_fx` and likewise for `Q`.
pub fn user_response_rows(
    net: &Network,
    forecast: &Demand,
    contracts: &[Contract],
    reg: &mut VarRegistry,
) -> Result<LinearConstraintBlock, MilpError> {
    check_demand(net, forecast)?;
    let aligned = align_contracts(net, contracts)?;
    let gtd = guaranteed_per_phase(net, &aligned);
    let mut block = LinearConstraintBlock::new();
    for t in 0..forecast.horizon() {
        for (user, g) in gtd.iter().enumerate() {
            let s = reg.register(VarKey::S { user, t });
            for phase in net.user(user).phases.iter() {
                let fx = forecast.get(user, phase, t);
                let gp = g[phase.index()];
                for (key, fx, gp, tag) in [
                    (
                        VarKey::P { user, phase, t },
                        fx.re,
                        gp.re,
                        RowTag::ResponseP { user, phase, t },
                    ),
                    (
                        VarKey::Q { user, phase, t },
                        fx.im,
                        gp.im,
                        RowTag::ResponseQ { user, phase, t },
                    ),
                ] {
                    let mut terms = vec![(reg.register(key), 1.0)];
                    if gp != fx {
                        terms.push((s, fx - gp));
                    }
                    block.push(tag, terms, Sense::Eq, fx);
                }
            }
        }
    }
    Ok(block)
}

/// Registers `s` for every user and timestep, then `y` and `z` for users
/// whose contract limits activations or imposes a gap.
pub(crate) fn register_binaries(contracts: &[Contract], horizon: usize, reg: &mut VarRegistry) {
    for user in 0..contracts.len() {
        for t in 0..horizon {
            reg.register(VarKey::S { user, t });
        }
    }
    for (user, c) in contracts.iter().enumerate() {
        if c.needs_transitions() {
            for t in 0..horizon {
                reg.register(VarKey::Y { user, t });
            }
            for t in 0..horizon {
                reg.register(VarKey::Z { user, t });
            }
        }
    }
}

/// Comfort rows for `contracts` (indexed by position):
/// - `s_t - s_{t-1} - y_t + z_t = 0`, with `s_{-1} = 0` and `z_0 = 0`;
/// - `sum_t y_t <= eta`;
/// - `sum_{tau=t-alpha..t} s_tau <= alpha` for every full window;
/// - `sum_{tau=max(0,t-delta)..t} z_tau + s_t <= 1`.
///
/// Unlimited parameters emit no rows.
pub fn comfort_rows(contracts: &[Contract], horizon: usize, reg: &mut VarRegistry) -> LinearConstraintBlock {
    let mut block = LinearConstraintBlock::new();
    for (user, c) in contracts.iter().enumerate() {
        let s = |reg: &mut VarRegistry, t| reg.register(VarKey::S { user, t });
        if c.needs_transitions() {
            for t in 0..horizon {
                let mut terms = vec![(s(reg, t), 1.0)];
                if t > 0 {
                    terms.push((s(reg, t - 1), -1.0));
                }
                terms.push((reg.register(VarKey::Y { user, t }), -1.0));
                terms.push((reg.register(VarKey::Z { user, t }), 1.0));
                block.push(RowTag::Transition { user, t }, terms, Sense::Eq, 0.0);
            }
            if horizon > 0 {
                let z0 = reg.register(VarKey::Z { user, t: 0 });
                block.push(RowTag::Boundary { user }, vec![(z0, 1.0)], Sense::Eq, 0.0);
            }
            if let Some(eta) = c.eta {
                let terms = (0..horizon)
                    .map(|t| (reg.register(VarKey::Y { user, t }), 1.0))
                    .collect();
                block.push(RowTag::Activations { user }, terms, Sense::Le, eta as f64);
            }
            let d = c.delta_steps as usize;
            for t in 0..horizon {
                let mut terms: Vec<_> = (t.saturating_sub(d)..=t)
                    .map(|tau| (reg.register(VarKey::Z { user, t: tau }), 1.0))
                    .collect();
                terms.push((s(reg, t), 1.0));
                block.push(RowTag::Gap { user, t }, terms, Sense::Le, 1.0);
            }
        }
        if let Some(alpha) = c.alpha_steps {
            let a = alpha as usize;
            for t in a..horizon {
                let terms = (t - a..=t).map(|tau| (s(reg, tau), 1.0)).collect();
                block.push(RowTag::Duration { user, t }, terms, Sense::Le, alpha as f64);
            }
        }
    }
    block
}

/// The assembled scheduling problem. `lp` holds every variable and row;
/// binaries occupy the first `beta` registry slots.
#[derive(Clone, Debug)]
pub struct MilpModel {
    pub net: Network,
    pub forecast: Demand,
    pub contracts: Vec<Contract>,
    pub limits: Limits,
    pub spec: ModelSpec,
    /// Guaranteed power per user and phase, p.u.
    pub gtd: Vec<[Complex64; 3]>,
    pub lp: LinearProgram,
    pub beta: usize,
}

pub fn build_milp(
    net: &Network,
    forecast: &Demand,
    contracts: &[Contract],
    limits: &Limits,
    spec: ModelSpec,
) -> Result<MilpModel, MilpError> {
    check_demand(net, forecast)?;
    if forecast.horizon() != limits.horizon {
        return Err(MilpError::Dimension(format!(
            "profiles span {} steps, limits {}",
            forecast.horizon(),
            limits.horizon
        )));
    }
    check_limits(net, limits)?;
    let aligned = align_contracts(net, contracts)?;
    let horizon = forecast.horizon();

    let mut lp = LinearProgram::default();
    register_binaries(&aligned, horizon, &mut lp.vars);
    let beta = lp.vars.len();
    let reg = &mut lp.vars;
    let mut rows = build_balance(net, horizon, reg);
    rows.extend(build_ohm(net, horizon, reg));
    rows.extend(build_limits(net, limits, spec.tightening, spec.polygon, reg)?);
    rows.extend(user_response_rows(net, forecast, &aligned, reg)?);
    rows.extend(comfort_rows(&aligned, horizon, reg));
    lp.constraints = rows;
    lp.objective = (0..aligned.len() * horizon).map(|i| (i, 1.0)).collect();
    debug_assert_eq!(lp.vars.binary_count(), beta);

    Ok(MilpModel {
        net: net.clone(),
        forecast: forecast.clone(),
        gtd: guaranteed_per_phase(net, &aligned),
        contracts: aligned,
        limits: limits.clone(),
        spec,
        lp,
        beta,
    })
}

impl MilpModel {
    pub fn n_users(&self) -> usize {
        self.contracts.len()
    }

    pub fn horizon(&self) -> usize {
        self.forecast.horizon()
    }

    /// Registry index of `s[user][t]`.
    pub fn s_index(&self, user: usize, t: usize) -> usize {
        user * self.horizon() + t
    }

    /// Demand realised under activation pattern `s[user][t]`.
    pub fn realized_demand(&self, s: &[Vec<u8>]) -> Demand {
        let mut d = self.forecast.clone();
        for (user, row) in s.iter().enumerate() {
            for (t, &on) in row.iter().enumerate() {
                if on == 1 {
                    for p in self.net.user(user).phases.iter() {
                        d.set(user, p, t, self.gtd[user][p.index()]);
                    }
                }
            }
        }
        d
    }

    /// Schedule for `s` with canonical transition indicators. Users without
    /// transition variables get all-zero `y` and `z`.
    pub fn schedule_from_s(&self, s: Vec<Vec<u8>>) -> Schedule {
        let (mut y, mut z): (Vec<_>, Vec<_>) = s.iter().map(|r| canonical_transitions(r)).unzip();
        for (u, c) in self.contracts.iter().enumerate() {
            if !c.needs_transitions() {
                y[u].iter_mut().for_each(|v| *v = 0);
                z[u].iter_mut().for_each(|v| *v = 0);
            }
        }
        let demand = self.realized_demand(&s);
        let objective = s.iter().flatten().map(|&v| v as u64).sum();
        Schedule {
            s,
            y,
            z,
            demand,
            objective,
        }
    }

    /// Values of every model variable for `schedule`, with the power flow
    /// evaluated by the linear model.
    pub fn full_assignment(&self, schedule: &Schedule) -> Vec<f64> {
        let sol = evaluate_lin_pf(&self.net, &schedule.demand);
        let mut x = fill_assignment(&self.lp.vars, &sol, &schedule.demand);
        for (i, key) in self.lp.vars.keys().iter().enumerate().take(self.beta) {
            x[i] = match *key {
                VarKey::S { user, t } => schedule.s[user][t],
                VarKey::Y { user, t } => schedule.y[user][t],
                VarKey::Z { user, t } => schedule.z[user][t],
                _ => unreachable!("binaries come first"),
            } as f64;
        }
        x
    }
}
