use num_complex::Complex64;

use super::gamma::{gamma_matrix, GammaMatrix};
use crate::demand::Demand;
use crate::net::{Network, Phase};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Lifted voltages and diagonal branch flows at one timestep. Entries on
/// phases that are not energized are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LinStep {
    /// Squared voltage magnitude per bus and phase.
    pub u: Vec<[f64; 3]>,
    /// Diagonal branch flow per branch and phase, sending (upstream) side.
    pub lambda: Vec<[Complex64; 3]>,
}

/// Voltage drop on phase `p` of a branch carrying diagonal flow `lambda`:
/// `2 Re(sum_q gamma[p][q] lambda[q] conj(Z[p][q]))`.
pub(crate) fn ohm_drop(g: &GammaMatrix, net: &Network, branch: usize, p: Phase, lambda: &[Complex64; 3]) -> f64 {
    let br = net.branch(branch);
    let mut acc = ZERO;
    for q in br.phases.iter() {
        acc += g.get(p.index(), q.index()) * lambda[q.index()] * br.z.get(p, q).conj();
    }
    2.0 * acc.re
}

/// Solves the linear branch-flow equations at one timestep for fixed user
/// demands `loads[user][phase]` (p.u.): lossless backward accumulation of
/// flows, then forward propagation of lifted voltages from the source.
pub fn lin_pf_step(net: &Network, loads: &[[Complex64; 3]]) -> LinStep {
    let g = gamma_matrix();
    let mut lambda = vec![[ZERO; 3]; net.n_branches()];
    let mut u = vec![[0.0; 3]; net.n_buses()];

    for &bus in net.order.iter().rev() {
        let Some(k) = net.parent_branch[bus] else {
            continue;
        };
        let phases = net.branch(k).phases;
        let mut flow = lambda[k];
        if let Some(user) = net.bus_user[bus] {
            for p in net.user(user).phases.iter() {
                flow[p.index()] += loads[user][p.index()];
            }
        }
        for p in Phase::ALL {
            if !phases.contains(p) {
                flow[p.index()] = ZERO;
            }
        }
        lambda[k] = flow;
        let up = net.branch_up[k];
        if let Some(pk) = net.parent_branch[up] {
            for p in phases.iter() {
                lambda[pk][p.index()] += flow[p.index()];
            }
        }
    }

    for p in net.bus(net.source).phases.iter() {
        u[net.source][p.index()] = 1.0;
    }
    for &bus in &net.order {
        let Some(k) = net.parent_branch[bus] else {
            continue;
        };
        let up = net.branch_up[k];
        for p in net.branch(k).phases.iter() {
            u[bus][p.index()] = u[up][p.index()] - ohm_drop(&g, net, k, p, &lambda[k]);
        }
    }
    LinStep { u, lambda }
}

/// Linear power-flow solution over a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct LinPfSolution {
    pub steps: Vec<LinStep>,
}

impl LinPfSolution {
    pub fn u(&self, bus: usize, phase: Phase, t: usize) -> f64 {
        self.steps[t].u[bus][phase.index()]
    }

    pub fn lambda(&self, branch: usize, phase: Phase, t: usize) -> Complex64 {
        self.steps[t].lambda[branch][phase.index()]
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

pub fn evaluate_lin_pf(net: &Network, demand: &Demand) -> LinPfSolution {
    LinPfSolution {
        steps: (0..demand.horizon()).map(|t| lin_pf_step(net, &demand.at(t))).collect(),
    }
}
