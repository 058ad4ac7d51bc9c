use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::eval::{LinPfSolution, LinStep};
use super::gamma::gamma_matrix;
use super::LinPfError;
use crate::demand::Demand;
use crate::lp::{LinearConstraintBlock, Part, RowTag, Sense, VarKey, VarRegistry};
use crate::net::Network;

/// Operating limits of a feeder over a scheduling horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub horizon: usize,
    /// Lower voltage magnitude bound per bus, p.u.
    pub vmin: Vec<f64>,
    /// Upper voltage magnitude bound per bus, p.u.
    pub vmax: Vec<f64>,
    /// Per-phase apparent power rating per branch, p.u.
    pub s_rated: Vec<f64>,
}

impl Limits {
    pub fn from_network(net: &Network, horizon: usize) -> Self {
        Limits {
            horizon,
            vmin: net.feeder.buses.iter().map(|b| b.vmin_pu).collect(),
            vmax: net.feeder.buses.iter().map(|b| b.vmax_pu).collect(),
            s_rated: net.feeder.branches.iter().map(|b| b.s_rated_pu).collect(),
        }
    }
}

/// Limit tightening applied inside the linear model: the voltage floor is
/// raised by `voltage` p.u. and thermal ratings are scaled by `1 - thermal`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tightening {
    pub voltage: f64,
    pub thermal: f64,
}

impl Tightening {
    pub const NONE: Tightening = Tightening {
        voltage: 0.0,
        thermal: 0.0,
    };

    pub fn validate(&self) -> Result<(), LinPfError> {
        if !(self.voltage >= 0.0 && self.voltage.is_finite()) {
            return Err(LinPfError::Tightening(format!(
                "voltage tightening must be >= 0, got {}",
                self.voltage
            )));
        }
        if !(0.0..1.0).contains(&self.thermal) {
            return Err(LinPfError::Tightening(format!(
                "thermal tightening must lie in [0, 1), got {}",
                self.thermal
            )));
        }
        Ok(())
    }
}

pub const DEFAULT_POLYGON_SIDES: usize = 8;

/// Regular K-gon inscribed in the thermal circle, with a vertex on the
/// positive real axis. Side `k` has outward normal at angle `(2k+1) pi / K`
/// and lies at distance `R cos(pi / K)` from the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThermalPolygon {
    pub sides: usize,
}

impl Default for ThermalPolygon {
    fn default() -> Self {
        ThermalPolygon {
            sides: DEFAULT_POLYGON_SIDES,
        }
    }
}

impl ThermalPolygon {
    pub fn new(sides: usize) -> Result<Self, LinPfError> {
        if sides < 3 {
            return Err(LinPfError::Polygon(sides));
        }
        Ok(ThermalPolygon { sides })
    }

    pub fn normal_angle(&self, k: usize) -> f64 {
        (2 * k + 1) as f64 * PI / self.sides as f64
    }

    pub fn normals(&self) -> Vec<(f64, f64)> {
        (0..self.sides)
            .map(|k| {
                let a = self.normal_angle(k);
                (a.cos(), a.sin())
            })
            .collect()
    }

    /// Distance of every side from the origin, for unit radius.
    pub fn offset(&self) -> f64 {
        (PI / self.sides as f64).cos()
    }

    /// Slack of each side for flow `(re, im)` and circle radius `radius`;
    /// negative means violated.
    pub fn slacks(&self, re: f64, im: f64, radius: f64) -> Vec<f64> {
        let off = radius * self.offset();
        self.normals()
            .into_iter()
            .map(|(c, s)| off - (c * re + s * im))
            .collect()
    }
}

/// Kirchhoff balance: per non-source bus, energized phase and timestep,
/// inflow minus outflow minus user demand equals zero, as real and
/// imaginary rows.
pub fn build_balance(net: &Network, horizon: usize, reg: &mut VarRegistry) -> LinearConstraintBlock {
    let mut block = LinearConstraintBlock::new();
    let children = children_of(net);
    for t in 0..horizon {
        for &bus in &net.order {
            let Some(k_in) = net.parent_branch[bus] else {
                continue;
            };
            for phase in net.energized(bus).iter() {
                for part in [Part::Re, Part::Im] {
                    let lam = |branch| match part {
                        Part::Re => VarKey::LambdaRe { branch, phase, t },
                        Part::Im => VarKey::LambdaIm { branch, phase, t },
                    };
                    let mut terms = vec![(reg.register(lam(k_in)), 1.0)];
                    for &k in &children[bus] {
                        if net.branch(k).phases.contains(phase) {
                            terms.push((reg.register(lam(k)), -1.0));
                        }
                    }
                    if let Some(user) = net.bus_user[bus] {
                        if net.user(user).phases.contains(phase) {
                            let key = match part {
                                Part::Re => VarKey::P { user, phase, t },
                                Part::Im => VarKey::Q { user, phase, t },
                            };
                            terms.push((reg.register(key), -1.0));
                        }
                    }
                    block.push(RowTag::Balance { bus, phase, t, part }, terms, Sense::Eq, 0.0);
                }
            }
        }
    }
    block
}

/// Projected Ohm's law per branch, phase and timestep:
/// `u_down - u_up + 2 Re(sum_q gamma[p][q] lambda_q conj(Z[p][q])) = 0`.
/// The source voltage is the constant 1.
pub fn build_ohm(net: &Network, horizon: usize, reg: &mut VarRegistry) -> LinearConstraintBlock {
    let g = gamma_matrix();
    let mut block = LinearConstraintBlock::new();
    for t in 0..horizon {
        for k in net.branches_in_order() {
            let (up, down) = (net.branch_up[k], net.branch_down[k]);
            let br = net.branch(k);
            for p in br.phases.iter() {
                let mut terms = vec![(reg.register(VarKey::U { bus: down, phase: p, t }), 1.0)];
                let mut rhs = 0.0;
                if up == net.source {
                    rhs = 1.0;
                } else {
                    terms.push((reg.register(VarKey::U { bus: up, phase: p, t }), -1.0));
                }
                for q in br.phases.iter() {
                    let c = g.get(p.index(), q.index()) * br.z.get(p, q).conj();
                    terms.push((reg.register(VarKey::LambdaRe { branch: k, phase: q, t }), 2.0 * c.re));
                    terms.push((reg.register(VarKey::LambdaIm { branch: k, phase: q, t }), -2.0 * c.im));
                }
                block.push(RowTag::Ohm { branch: k, phase: p, t }, terms, Sense::Eq, rhs);
            }
        }
    }
    block
}

/// Voltage band `(vmin + dU)^2 <= u <= vmax^2` per non-source bus and
/// polygonal thermal limits `|lambda| <= S (1 - dS)` per branch phase.
pub fn build_limits(
    net: &Network,
    limits: &Limits,
    tightening: Tightening,
    polygon: ThermalPolygon,
    reg: &mut VarRegistry,
) -> Result<LinearConstraintBlock, LinPfError> {
    tightening.validate()?;
    check_limits(net, limits)?;
    let normals = polygon.normals();
    let mut block = LinearConstraintBlock::new();
    for t in 0..limits.horizon {
        for &bus in &net.order {
            if bus == net.source {
                continue;
            }
            let lo = (limits.vmin[bus] + tightening.voltage).powi(2);
            let hi = limits.vmax[bus].powi(2);
            for phase in net.energized(bus).iter() {
                let u = reg.register(VarKey::U { bus, phase, t });
                block.push(RowTag::VoltageMin { bus, phase, t }, vec![(u, 1.0)], Sense::Ge, lo);
                block.push(RowTag::VoltageMax { bus, phase, t }, vec![(u, 1.0)], Sense::Le, hi);
            }
        }
        for k in net.branches_in_order() {
            let rhs = limits.s_rated[k] * (1.0 - tightening.thermal) * polygon.offset();
            for phase in net.branch(k).phases.iter() {
                let re = reg.register(VarKey::LambdaRe { branch: k, phase, t });
                let im = reg.register(VarKey::LambdaIm { branch: k, phase, t });
                for (side, &(c, s)) in normals.iter().enumerate() {
                    block.push(
                        RowTag::Thermal {
                            branch: k,
                            phase,
                            t,
                            side,
                        },
                        vec![(re, c), (im, s)],
                        Sense::Le,
                        rhs,
                    );
                }
            }
        }
    }
    Ok(block)
}

pub(crate) fn check_limits(net: &Network, limits: &Limits) -> Result<(), LinPfError> {
    if limits.vmin.len() != net.n_buses()
        || limits.vmax.len() != net.n_buses()
        || limits.s_rated.len() != net.n_branches()
    {
        return Err(LinPfError::Dimension("limit vectors do not match the feeder".into()));
    }
    Ok(())
}

fn children_of(net: &Network) -> Vec<Vec<usize>> {
    let mut children = vec![Vec::new(); net.n_buses()];
    for k in net.branches_in_order() {
        children[net.branch_up[k]].push(k);
    }
    children
}

/// Largest violation of the linear-model limits (voltage band and thermal
/// polygon) at one timestep; zero when every limit holds.
pub fn lin_step_violation(
    net: &Network,
    limits: &Limits,
    tightening: Tightening,
    polygon: ThermalPolygon,
    step: &LinStep,
) -> f64 {
    let mut worst: f64 = 0.0;
    for bus in 0..net.n_buses() {
        if bus == net.source {
            continue;
        }
        let lo = (limits.vmin[bus] + tightening.voltage).powi(2);
        let hi = limits.vmax[bus].powi(2);
        for p in net.energized(bus).iter() {
            let u = step.u[bus][p.index()];
            worst = worst.max(lo - u).max(u - hi);
        }
    }
    for k in 0..net.n_branches() {
        let radius = limits.s_rated[k] * (1.0 - tightening.thermal);
        for p in net.branch(k).phases.iter() {
            let l = step.lambda[k][p.index()];
            for s in polygon.slacks(l.re, l.im, radius) {
                worst = worst.max(-s);
            }
        }
    }
    worst
}

/// Values for every power-flow and demand variable in `reg`, taken from a
/// linear solution and its demands. Binary variables are left at zero.
pub fn fill_assignment(reg: &VarRegistry, sol: &LinPfSolution, demand: &Demand) -> Vec<f64> {
    reg.keys()
        .iter()
        .map(|key| match *key {
            VarKey::U { bus, phase, t } => sol.u(bus, phase, t),
            VarKey::LambdaRe { branch, phase, t } => sol.lambda(branch, phase, t).re,
            VarKey::LambdaIm { branch, phase, t } => sol.lambda(branch, phase, t).im,
            VarKey::P { user, phase, t } => demand.get(user, phase, t).re,
            VarKey::Q { user, phase, t } => demand.get(user, phase, t).im,
            _ => 0.0,
        })
        .collect()
}
