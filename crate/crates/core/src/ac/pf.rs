use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AcError;
use crate::demand::Demand;
use crate::net::{Network, Phase};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Voltage magnitude below which the sweep is declared collapsed.
pub const COLLAPSE_PU: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcOptions {
    /// Largest accepted power mismatch at any load, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Source phasor of `phase`: unit magnitude, phases 120 degrees apart.
pub fn source_phasor(phase: Phase) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * phase.index() as f64 / 3.0)
}

/// AC state at one timestep. Entries on de-energized phases are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcStep {
    pub v: Vec<[Complex64; 3]>,
    /// Series current per branch and phase, downstream direction.
    pub i: Vec<[Complex64; 3]>,
    /// Sending-end complex power per branch and phase.
    pub s_flow: Vec<[Complex64; 3]>,
    pub iterations: usize,
    /// Power mismatch at convergence.
    pub mismatch: f64,
}

/// Backward/forward sweep for fixed user demands `loads[user][phase]`.
pub fn solve_ac_step(net: &Network, loads: &[[Complex64; 3]], opts: AcOptions) -> Result<AcStep, AcError> {
    let nb = net.n_buses();
    let mut v = vec![[ZERO; 3]; nb];
    for bus in 0..nb {
        for p in net.energized(bus).iter() {
            v[bus][p.index()] = source_phasor(p);
        }
    }
    let mut i = vec![[ZERO; 3]; net.n_branches()];
    let mut iterations = 0;
    loop {
        // backward: user currents aggregated towards the source
        let mut inj = vec![[ZERO; 3]; nb];
        for (u, &bus) in net.user_bus.iter().enumerate() {
            for p in net.user(u).phases.iter() {
                let k = p.index();
                inj[bus][k] = (loads[u][k] / v[bus][k]).conj();
            }
        }
        i.iter_mut().for_each(|c| *c = [ZERO; 3]);
        for &bus in net.order.iter().rev() {
            let Some(k) = net.parent_branch[bus] else {
                continue;
            };
            let phases = net.branch(k).phases;
            for p in phases.iter() {
                i[k][p.index()] += inj[bus][p.index()];
            }
            if let Some(pk) = net.parent_branch[net.branch_up[k]] {
                for p in phases.iter() {
                    let add = i[k][p.index()];
                    i[pk][p.index()] += add;
                }
            }
        }
        // forward: voltage drops from the source
        for &bus in &net.order {
            let Some(k) = net.parent_branch[bus] else {
                continue;
            };
            let br = net.branch(k);
            let up = net.branch_up[k];
            for p in br.phases.iter() {
                let mut drop = ZERO;
                for q in br.phases.iter() {
                    drop += br.z.get(p, q) * i[k][q.index()];
                }
                v[bus][p.index()] = v[up][p.index()] - drop;
            }
        }
        iterations += 1;
        let mut mismatch: f64 = 0.0;
        for (u, &bus) in net.user_bus.iter().enumerate() {
            for p in net.user(u).phases.iter() {
                let k = p.index();
                let s = v[bus][k] * inj[bus][k].conj();
                mismatch = mismatch.max((s - loads[u][k]).norm());
            }
        }
        let collapsed = (0..nb).any(|b| net.energized(b).iter().any(|p| v[b][p.index()].norm() < COLLAPSE_PU));
        if collapsed {
            return Err(AcError::Collapse {
                t: None,
                iteration: iterations,
            });
        }
        if mismatch <= opts.tol {
            let s_flow = (0..net.n_branches())
                .map(|k| {
                    let up = net.branch_up[k];
                    let mut s = [ZERO; 3];
                    for p in net.branch(k).phases.iter() {
                        s[p.index()] = v[up][p.index()] * i[k][p.index()].conj();
                    }
                    s
                })
                .collect();
            return Ok(AcStep {
                v,
                i,
                s_flow,
                iterations,
                mismatch,
            });
        }
        if iterations >= opts.max_iter {
            return Err(AcError::NonConvergence {
                t: None,
                residual: mismatch,
            });
        }
    }
}

/// Largest difference between the demanded power and the power drawn at
/// each load, with branch currents recomputed from the voltages through
/// the inverse branch impedances.
pub fn kirchhoff_mismatch(net: &Network, loads: &[[Complex64; 3]], step: &AcStep) -> f64 {
    let mut branch_i = vec![[ZERO; 3]; net.n_branches()];
    for (k, cur) in branch_i.iter_mut().enumerate() {
        let br = net.branch(k);
        let ph: Vec<Phase> = br.phases.iter().collect();
        let n = ph.len();
        let z = DMatrix::from_fn(n, n, |a, b| {
            let c = br.z.get(ph[a], ph[b]);
            Complex::new(c.re, c.im)
        });
        let (up, down) = (net.branch_up[k], net.branch_down[k]);
        let dv = DVector::from_fn(n, |a, _| {
            let c = step.v[up][ph[a].index()] - step.v[down][ph[a].index()];
            Complex::new(c.re, c.im)
        });
        let Some(sol) = z.lu().solve(&dv) else {
            return f64::INFINITY;
        };
        for (a, p) in ph.iter().enumerate() {
            cur[p.index()] = Complex64::new(sol[a].re, sol[a].im);
        }
    }
    let mut drawn = vec![[ZERO; 3]; net.n_buses()];
    for k in 0..net.n_branches() {
        let (up, down) = (net.branch_up[k], net.branch_down[k]);
        for p in 0..3 {
            drawn[down][p] += branch_i[k][p];
            drawn[up][p] -= branch_i[k][p];
        }
    }
    let mut worst: f64 = 0.0;
    for bus in 0..net.n_buses() {
        if bus == net.source {
            continue;
        }
        for p in net.energized(bus).iter() {
            let k = p.index();
            let demand = net.bus_user[bus]
                .filter(|&u| net.user(u).phases.contains(p))
                .map_or(ZERO, |u| loads[u][k]);
            let s = step.v[bus][k] * drawn[bus][k].conj();
            worst = worst.max((s - demand).norm());
        }
    }
    worst
}

/// AC solution over a horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcPfSolution {
    pub steps: Vec<AcStep>,
    pub converged: bool,
    pub max_mismatch: f64,
}

impl AcPfSolution {
    pub fn v(&self, bus: usize, phase: Phase, t: usize) -> Complex64 {
        self.steps[t].v[bus][phase.index()]
    }

    pub fn s_flow(&self, branch: usize, phase: Phase, t: usize) -> Complex64 {
        self.steps[t].s_flow[branch][phase.index()]
    }
}

/// Solves every timestep independently (in parallel); fails on the first
/// timestep, in time order, that does not converge.
pub fn solve_ac_pf(net: &Network, demand: &Demand, opts: AcOptions) -> Result<AcPfSolution, AcError> {
    if demand.n_users() != net.n_users() {
        return Err(AcError::Dimension(format!(
            "demand covers {} users, feeder has {}",
            demand.n_users(),
            net.n_users()
        )));
    }
    let steps: Vec<Result<AcStep, AcError>> = (0..demand.horizon())
        .into_par_iter()
        .map(|t| solve_ac_step(net, &demand.at(t), opts).map_err(|e| e.at(t)))
        .collect();
    let steps = steps.into_iter().collect::<Result<Vec<_>, _>>()?;
    let max_mismatch = steps.iter().map(|s| s.mismatch).fold(0.0, f64::max);
    Ok(AcPfSolution {
        steps,
        converged: true,
        max_mismatch,
    })
}
