//! Projection of the scheduling model onto its binary variables. On a
//! radial feeder the linear power flow is affine in the activation pattern,
//! so every limit row becomes a row over `s` alone.

use num_complex::Complex64;

use super::model::MilpModel;
use super::runs::RunUser;
use crate::linpf::lin_pf_step;
use crate::lp::{Row, RowTag, Sense, VarKey};

const COEF_EPS: f64 = 1e-13;
const REDUNDANT_EPS: f64 = 1e-12;
const CONST_ROW_TOL: f64 = 1e-9;

/// Row coefficient of one activation from its voltage and flow sensitivities.
type Sensitivity<'a> = dyn Fn(&[[f64; 3]], &[[Complex64; 3]]) -> f64 + 'a;

/// Value source of a binary when deriving canonical transitions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Src {
    Col(usize),
    Const(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum ColKind {
    S,
    Y {
        cur: Src,
        prev: Src,
    },
    Z {
        cur: Src,
        prev: Src,
    },
    /// Reduction run of the run formulation.
    Run,
}

/// Binary-only linear system after substituting fixed binaries.
#[derive(Clone, Debug)]
pub(crate) struct Reduced {
    /// Registry index of each column.
    pub col_bin: Vec<usize>,
    pub kinds: Vec<ColKind>,
    pub obj: Vec<f64>,
    pub rows: Vec<Row>,
    /// Value of each fixed binary (zero for free ones).
    pub bin_value: Vec<f64>,
    /// A row left without free variables and violated by the fixings.
    pub infeasible: Option<(RowTag, Sense, f64)>,
}

/// Limit rows at every timestep as `<=` rows over `s` registry indices,
/// dropping rows no activation pattern can violate.
pub(crate) fn network_rows(model: &MilpModel) -> Vec<Row> {
    let net = &model.net;
    let lim = &model.limits;
    let tight = model.spec.tightening;
    let normals = model.spec.polygon.normals();
    let offset = model.spec.polygon.offset();
    let n_users = model.n_users();
    let mut rows = Vec::new();
    for t in 0..model.horizon() {
        let loads = model.forecast.at(t);
        let base = lin_pf_step(net, &loads);
        let mut sens = Vec::new();
        for u in 0..n_users {
            let phases = net.user(u).phases;
            if phases.iter().all(|p| loads[u][p.index()] == model.gtd[u][p.index()]) {
                continue;
            }
            let mut l = loads.clone();
            for p in phases.iter() {
                l[u][p.index()] = model.gtd[u][p.index()];
            }
            let step = lin_pf_step(net, &l);
            let du: Vec<[f64; 3]> = step
                .u
                .iter()
                .zip(&base.u)
                .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
                .collect();
            let dl: Vec<[Complex64; 3]> = step
                .lambda
                .iter()
                .zip(&base.lambda)
                .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
                .collect();
            sens.push((model.s_index(u, t), du, dl));
        }
        let mut push = |tag, coef: &Sensitivity<'_>, rhs: f64| {
            let terms: Vec<(usize, f64)> = sens
                .iter()
                .map(|(i, du, dl)| (*i, coef(du, dl)))
                .filter(|&(_, c)| c.abs() >= COEF_EPS)
                .collect();
            let worst: f64 = terms.iter().map(|&(_, c)| c.max(0.0)).sum();
            if worst > rhs + REDUNDANT_EPS {
                rows.push(Row {
                    tag,
                    terms,
                    sense: Sense::Le,
                    rhs,
                });
            }
        };
        for &bus in &net.order {
            if bus == net.source {
                continue;
            }
            let lo = (lim.vmin[bus] + tight.voltage).powi(2);
            let hi = lim.vmax[bus].powi(2);
            for phase in net.energized(bus).iter() {
                let p = phase.index();
                let u0 = base.u[bus][p];
                push(RowTag::VoltageMin { bus, phase, t }, &|du, _| -du[bus][p], u0 - lo);
                push(RowTag::VoltageMax { bus, phase, t }, &|du, _| du[bus][p], hi - u0);
            }
        }
        for branch in net.branches_in_order() {
            let radius = lim.s_rated[branch] * (1.0 - tight.thermal) * offset;
            for phase in net.branch(branch).phases.iter() {
                let p = phase.index();
                let l0 = base.lambda[branch][p];
                for (side, &(c, s)) in normals.iter().enumerate() {
                    push(
                        RowTag::Thermal { branch, phase, t, side },
                        &|_, dl| c * dl[branch][p].re + s * dl[branch][p].im,
                        radius - (c * l0.re + s * l0.im),
                    );
                }
            }
        }
    }
    rows
}

fn is_comfort(tag: &RowTag) -> bool {
    matches!(
        tag,
        RowTag::Transition { .. }
            | RowTag::Boundary { .. }
            | RowTag::Activations { .. }
            | RowTag::Duration { .. }
            | RowTag::Gap { .. }
    )
}

/// Binaries fixed to zero without changing the optimal value: every
/// reduction action of an optimal schedule starts and ends at a step where
/// the activation relieves some limit row, since trimming a useless end
/// keeps all rows satisfied and lowers the objective.
fn optimality_fixings(model: &MilpModel, net_rows: &[Row], fixed: &mut [Option<f64>]) {
    let horizon = model.horizon();
    let mut helpful = vec![false; model.n_users() * horizon];
    for row in net_rows {
        for &(i, c) in &row.terms {
            if c < 0.0 {
                helpful[i] = true;
            }
        }
    }
    for (u, c) in model.contracts.iter().enumerate() {
        let h: Vec<usize> = (0..horizon).filter(|&t| helpful[model.s_index(u, t)]).collect();
        let mut keep = vec![false; horizon];
        if !c.has_comfort_rows() {
            for &t in &h {
                keep[t] = true;
            }
        } else if let (Some(&first), Some(&last)) = (h.first(), h.last()) {
            keep[first..=last].iter_mut().for_each(|k| *k = true);
            if let Some(alpha) = c.alpha_steps {
                for w in h.windows(2) {
                    if w[1] - w[0] + 1 > alpha as usize {
                        keep[w[0] + 1..w[1]].iter_mut().for_each(|k| *k = false);
                    }
                }
            }
        }
        for t in 0..horizon {
            if !keep[t] {
                fixed[model.s_index(u, t)].get_or_insert(0.0);
            }
        }
    }
    // transitions that cannot occur given the fixed activations
    for (i, key) in model.lp.vars.keys().iter().enumerate().take(model.beta) {
        let (user, t, act) = match *key {
            VarKey::Y { user, t } => (user, t, true),
            VarKey::Z { user, t } => (user, t, false),
            _ => continue,
        };
        let cur = fixed[model.s_index(user, t)];
        let prev = if t == 0 {
            Some(0.0)
        } else {
            fixed[model.s_index(user, t - 1)]
        };
        let (from, to) = if act { (0.0, 1.0) } else { (1.0, 0.0) };
        let blocked = prev.is_some_and(|v| v != from) || cur.is_some_and(|v| v != to);
        if blocked {
            fixed[i].get_or_insert(0.0);
        }
    }
}

impl Reduced {
    /// Projects `model` with the binaries in `fixings` (registry index,
    /// value) substituted. With `presolve`, binaries that no optimal
    /// schedule needs are fixed as well; the resulting relaxation then
    /// bounds the integer optimum but not the plain relaxation.
    pub fn build(model: &MilpModel, fixings: &[(usize, f64)], presolve: bool) -> Reduced {
        let beta = model.beta;
        let net_rows = network_rows(model);
        let mut fixed: Vec<Option<f64>> = vec![None; beta];
        for &(i, v) in fixings {
            fixed[i] = Some(v);
        }
        if presolve {
            optimality_fixings(model, &net_rows, &mut fixed);
        }

        let mut bin_col = vec![None; beta];
        let mut col_bin = Vec::new();
        for (i, f) in fixed.iter().enumerate() {
            if f.is_none() {
                bin_col[i] = Some(col_bin.len());
                col_bin.push(i);
            }
        }
        let bin_value: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        let src = |i: usize| match bin_col[i] {
            Some(c) => Src::Col(c),
            None => Src::Const(bin_value[i]),
        };
        let keys = model.lp.vars.keys();
        let kinds: Vec<ColKind> = col_bin
            .iter()
            .map(|&i| {
                let pair = |user, t| {
                    let cur = src(model.s_index(user, t));
                    let prev = if t == 0 {
                        Src::Const(0.0)
                    } else {
                        src(model.s_index(user, t - 1))
                    };
                    (cur, prev)
                };
                match keys[i] {
                    VarKey::S { .. } => ColKind::S,
                    VarKey::Y { user, t } => {
                        let (cur, prev) = pair(user, t);
                        ColKind::Y { cur, prev }
                    }
                    VarKey::Z { user, t } => {
                        let (cur, prev) = pair(user, t);
                        ColKind::Z { cur, prev }
                    }
                    _ => unreachable!("binaries come first"),
                }
            })
            .collect();
        let obj = col_bin
            .iter()
            .map(|&i| if matches!(keys[i], VarKey::S { .. }) { 1.0 } else { 0.0 })
            .collect();

        let comfort = model.lp.constraints.rows.iter().filter(|r| is_comfort(&r.tag));
        let mut rows = Vec::new();
        let mut infeasible = None;
        for row in comfort.chain(net_rows.iter()) {
            let mut rhs = row.rhs;
            let mut terms = Vec::with_capacity(row.terms.len());
            for &(i, c) in &row.terms {
                match bin_col[i] {
                    Some(col) => terms.push((col, c)),
                    None => rhs -= c * bin_value[i],
                }
            }
            let (terms, sense, rhs) = match row.sense {
                Sense::Ge => (terms.into_iter().map(|(j, c)| (j, -c)).collect(), Sense::Le, -rhs),
                s => (terms, s, rhs),
            };
            if terms.is_empty() {
                let ok = match sense {
                    Sense::Eq => rhs.abs() <= CONST_ROW_TOL,
                    _ => rhs >= -CONST_ROW_TOL,
                };
                if !ok && infeasible.is_none() {
                    infeasible = Some((row.tag, sense, rhs));
                }
                continue;
            }
            if sense == Sense::Le {
                let worst: f64 = terms.iter().map(|&(_, c): &(usize, f64)| c.max(0.0)).sum();
                if worst <= rhs + REDUNDANT_EPS {
                    continue;
                }
            }
            rows.push(Row {
                tag: row.tag,
                terms,
                sense,
                rhs,
            });
        }

        Reduced {
            col_bin,
            kinds,
            obj,
            rows,
            bin_value,
            infeasible,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.col_bin.len()
    }

    /// Splits into independent blocks of columns linked by shared rows.
    pub fn components(&self) -> Vec<Component> {
        let n = self.n_cols();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        fn union(p: &mut [usize], a: usize, b: usize) {
            let (a, b) = (find(p, a), find(p, b));
            if a != b {
                p[a.max(b)] = a.min(b);
            }
        }
        for row in &self.rows {
            let a = row.terms[0].0;
            for &(j, _) in &row.terms[1..] {
                union(&mut parent, a, j);
            }
        }
        // transition columns stay with the activations they are derived from
        for (c, kind) in self.kinds.iter().enumerate() {
            if let ColKind::Y { cur, prev } | ColKind::Z { cur, prev } = *kind {
                for s in [cur, prev] {
                    if let Src::Col(j) = s {
                        union(&mut parent, c, j);
                    }
                }
            }
        }
        let mut comp_of_root = vec![usize::MAX; n];
        let mut comps: Vec<Component> = Vec::new();
        let mut local = vec![0; n];
        for c in 0..n {
            let r = find(&mut parent, c);
            if comp_of_root[r] == usize::MAX {
                comp_of_root[r] = comps.len();
                comps.push(Component::default());
            }
            let comp = &mut comps[comp_of_root[r]];
            local[c] = comp.cols.len();
            comp.cols.push(c);
            comp.obj.push(self.obj[c]);
        }
        let map_src = |s: Src| match s {
            Src::Col(j) => Src::Col(local[j]),
            k => k,
        };
        for c in 0..n {
            let comp = &mut comps[comp_of_root[find(&mut parent, c)]];
            comp.kinds.push(match self.kinds[c] {
                ColKind::S => ColKind::S,
                ColKind::Y { cur, prev } => ColKind::Y {
                    cur: map_src(cur),
                    prev: map_src(prev),
                },
                ColKind::Z { cur, prev } => ColKind::Z {
                    cur: map_src(cur),
                    prev: map_src(prev),
                },
                ColKind::Run => ColKind::Run,
            });
        }
        for row in &self.rows {
            let comp = &mut comps[comp_of_root[find(&mut parent, row.terms[0].0)]];
            comp.rows.push(Row {
                tag: row.tag,
                terms: row.terms.iter().map(|&(j, c)| (local[j], c)).collect(),
                sense: row.sense,
                rhs: row.rhs,
            });
        }
        comps
    }
}

/// Independent block of a reduced system, in local column indices.
#[derive(Clone, Debug, Default)]
pub(crate) struct Component {
    /// Column of the parent reduced system for each local column.
    pub cols: Vec<usize>,
    pub kinds: Vec<ColKind>,
    pub obj: Vec<f64>,
    pub rows: Vec<Row>,
    pub runs: Vec<RunUser>,
}

impl Component {
    /// Fills transition columns of `x` canonically from its activations.
    pub fn complete(&self, x: &mut [f64]) {
        let val = |x: &[f64], s: Src| match s {
            Src::Col(j) => x[j],
            Src::Const(v) => v,
        };
        for (c, kind) in self.kinds.iter().enumerate() {
            match *kind {
                ColKind::S | ColKind::Run => {}
                ColKind::Y { cur, prev } => x[c] = (val(x, cur) - val(x, prev)).max(0.0),
                ColKind::Z { cur, prev } => x[c] = (val(x, prev) - val(x, cur)).max(0.0),
            }
        }
        for r in &self.runs {
            r.complete(x);
        }
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max)
    }

    pub fn s_cols(&self) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, ColKind::S))
            .map(|(c, _)| c)
    }
}
