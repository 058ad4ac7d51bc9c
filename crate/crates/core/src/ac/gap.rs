use serde::{Deserialize, Serialize};

use super::pf::{solve_ac_pf, AcOptions};
use super::AcError;
use crate::demand::Demand;
use crate::linpf::evaluate_lin_pf;
use crate::net::Network;

/// Error of the linear model against the AC power flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    /// `|u_lin - |V_ac|^2|` over non-source buses, energized phases and
    /// timesteps, p.u.^2.
    pub max_u: f64,
    pub mean_u: f64,
    /// `|lambda - S_ac|` (sending end) over branch phases and timesteps, p.u.
    pub max_flow: f64,
    pub mean_flow: f64,
}

pub fn lin_vs_ac_gap(net: &Network, demand: &Demand) -> Result<GapSummary, AcError> {
    let ac = solve_ac_pf(net, demand, AcOptions::default())?;
    let lin = evaluate_lin_pf(net, demand);
    let mut g = GapSummary::default();
    let (mut nu, mut nf) = (0usize, 0usize);
    for t in 0..demand.horizon() {
        for bus in 0..net.n_buses() {
            if bus == net.source {
                continue;
            }
            for p in net.energized(bus).iter() {
                let e = (lin.u(bus, p, t) - ac.v(bus, p, t).norm_sqr()).abs();
                g.max_u = g.max_u.max(e);
                g.mean_u += e;
                nu += 1;
            }
        }
        for k in 0..net.n_branches() {
            for p in net.branch(k).phases.iter() {
                let e = (lin.lambda(k, p, t) - ac.s_flow(k, p, t)).norm();
                g.max_flow = g.max_flow.max(e);
                g.mean_flow += e;
                nf += 1;
            }
        }
    }
    g.mean_u /= nu.max(1) as f64;
    g.mean_flow /= nf.max(1) as f64;
    Ok(g)
}
