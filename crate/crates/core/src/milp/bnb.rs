use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use microlp::{Problem, Solution, SolveOutcome, Variable};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::MilpModel;
use super::reduced::{ColKind, Component, Reduced};
use super::relax::{box_problem, constant_row_certificate, farkas, row_box_problem, FarkasCertificate};
use super::runs::{extend, Extended};
use super::schedule::{verify_schedule, Schedule};
use super::MilpError;
use crate::linpf::{lin_pf_step, lin_step_violation};
use crate::lp::{Row, RowTag};

/// Feasibility tolerance for incumbents, in the units of the limit rows.
pub const ROW_TOL: f64 = 1e-9;

const MAX_CUT_ROUNDS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Absolute optimality gap on the objective (a count of active steps).
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    /// Node budget per independent block.
    pub node_limit: Option<usize>,
    pub int_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tol: 0.0,
            time_limit: None,
            node_limit: None,
            int_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    pub reason: String,
    pub certificate: Option<FarkasCertificate>,
}

#[derive(Clone, Debug)]
pub enum MilpOutcome {
    Optimal(Schedule),
    Infeasible(Infeasibility),
    /// A limit stopped the search; `bound` is a valid lower bound.
    Timeout {
        incumbent: Option<Schedule>,
        bound: u64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub components: usize,
    pub columns: usize,
    pub rows: usize,
}

#[derive(Clone, Debug)]
pub struct MilpResult {
    pub outcome: MilpOutcome,
    pub stats: SolveStats,
}

impl MilpResult {
    pub fn objective(&self) -> Option<u64> {
        match &self.outcome {
            MilpOutcome::Optimal(s) => Some(s.objective),
            _ => None,
        }
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        match &self.outcome {
            MilpOutcome::Optimal(s) => Some(s),
            MilpOutcome::Timeout { incumbent, .. } => incumbent.as_ref(),
            MilpOutcome::Infeasible(_) => None,
        }
    }
}

/// Largest linear-model limit violation of `schedule` over the horizon.
pub fn network_violation(model: &MilpModel, schedule: &Schedule) -> f64 {
    (0..model.horizon())
        .map(|t| {
            let step = lin_pf_step(&model.net, &schedule.demand.at(t));
            lin_step_violation(
                &model.net,
                &model.limits,
                model.spec.tightening,
                model.spec.polygon,
                &step,
            )
        })
        .fold(0.0, f64::max)
}

/// Optimal schedule by branch-and-bound over LP relaxations of the
/// projected model. Independent blocks are searched in parallel; each
/// search is sequential and deterministic.
pub fn solve_milp(model: &MilpModel, opts: &SolveOptions) -> Result<MilpResult, MilpError> {
    let red = Reduced::build(model, &[], true);
    let comps = red.components();
    let mut stats = SolveStats {
        nodes: 0,
        components: comps.len(),
        columns: red.n_cols(),
        rows: red.rows.len(),
    };
    if let Some((tag, sense, rhs)) = red.infeasible {
        return Ok(MilpResult {
            outcome: MilpOutcome::Infeasible(Infeasibility {
                reason: format!("row {tag} cannot be satisfied"),
                certificate: Some(constant_row_certificate(tag, sense, rhs)),
            }),
            stats,
        });
    }
    let exts: Vec<Option<Extended>> = comps
        .iter()
        .map(|c| {
            c.rows
                .iter()
                .any(|r| limit_period(&r.tag).is_none())
                .then(|| extend(c, &red, model))
        })
        .collect();
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    let results: Vec<(Status, usize)> = comps
        .par_iter()
        .zip(&exts)
        .map(|(c, e)| {
            let mut search = Search::new(e.as_ref().map_or(c, |e| &e.comp), opts, deadline);
            let status = search.run();
            (status, search.nodes)
        })
        .collect();
    stats.nodes = results.iter().map(|r| r.1).sum();

    let mut x = red.bin_value.clone();
    let mut complete = true;
    let mut bound = 0u64;
    let mut timed_out = false;
    for ((comp, ext), (status, _)) in comps.iter().zip(&exts).zip(&results) {
        let searched = ext.as_ref().map_or(comp, |e| &e.comp);
        let (vals, b) = match status {
            Status::Optimal(v) => (Some(v), objective_of(searched, v)),
            Status::Timeout { incumbent, bound } => {
                timed_out = true;
                (incumbent.as_ref(), *bound)
            }
            Status::Infeasible { reason, certificate } => {
                let bin_name = |j: usize| model.lp.vars.key(red.col_bin[comp.cols[j]]).to_string();
                let certificate = match ext {
                    None => certificate
                        .as_ref()
                        .and_then(|rows| farkas(rows, &bin_name, comp.cols.len())),
                    Some(e) => certificate
                        .as_ref()
                        .and_then(|rows| farkas(rows, &|j| e.names[j].clone(), e.names.len()))
                        .or_else(|| farkas(&comp.rows, &bin_name, comp.cols.len())),
                };
                return Ok(MilpResult {
                    outcome: MilpOutcome::Infeasible(Infeasibility {
                        reason: reason.clone(),
                        certificate,
                    }),
                    stats,
                });
            }
            Status::Failed(msg) => return Err(MilpError::Lp(msg.clone())),
        };
        bound += b;
        match (vals, ext) {
            (Some(v), Some(e)) => {
                for (j, &bin) in e.s_bin.iter().enumerate() {
                    x[bin] = v[j];
                }
            }
            (Some(v), None) => {
                for (j, &c) in comp.cols.iter().enumerate() {
                    x[red.col_bin[c]] = v[j];
                }
            }
            (None, _) => complete = false,
        }
    }
    let schedule = complete.then(|| {
        let s = (0..model.n_users())
            .map(|u| {
                (0..model.horizon())
                    .map(|t| x[model.s_index(u, t)].round() as u8)
                    .collect()
            })
            .collect();
        model.schedule_from_s(s)
    });
    if let Some(sch) = &schedule {
        let comfort = verify_schedule(sch, &model.contracts, model.horizon());
        let viol = network_violation(model, sch);
        if !comfort.is_empty() || viol > ROW_TOL {
            return Err(MilpError::Internal(format!(
                "schedule failed re-verification ({} comfort violations, limit violation {viol:e})",
                comfort.len()
            )));
        }
    }
    let outcome = match (timed_out, schedule) {
        (false, Some(s)) => MilpOutcome::Optimal(s),
        (_, incumbent) => MilpOutcome::Timeout { incumbent, bound },
    };
    Ok(MilpResult { outcome, stats })
}

fn objective_of(comp: &Component, x: &[f64]) -> u64 {
    comp.s_cols().map(|c| x[c].round() as u64).sum()
}

enum Status {
    Optimal(Vec<f64>),
    /// Rows to certify infeasibility from, when the root relaxation is
    /// already infeasible.
    Infeasible {
        reason: String,
        certificate: Option<Vec<Row>>,
    },
    Timeout {
        incumbent: Option<Vec<f64>>,
        bound: u64,
    },
    Failed(String),
}

/// Open node of the search tree: only the branching decisions are kept;
/// its relaxation is re-derived from the root when it is popped.
struct Open {
    bound: u64,
    depth: usize,
    fixings: Vec<(usize, f64)>,
}

/// Timestep of a limit row; comfort rows have none.
fn limit_period(tag: &RowTag) -> Option<usize> {
    match *tag {
        RowTag::VoltageMin { t, .. } | RowTag::VoltageMax { t, .. } | RowTag::Thermal { t, .. } => Some(t),
        _ => None,
    }
}

/// Limit rows of `comp` split per timestep, as blocks over the activation
/// columns they touch. Only built when `comp` also holds comfort rows.
fn period_blocks(comp: &Component) -> Vec<Component> {
    if comp.rows.iter().all(|r| limit_period(&r.tag).is_some()) {
        return Vec::new();
    }
    let mut by_t: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for r in &comp.rows {
        if let Some(t) = limit_period(&r.tag) {
            by_t.entry(t).or_default().push(r);
        }
    }
    by_t.into_values()
        .map(|rows| {
            let mut cols: Vec<usize> = rows.iter().flat_map(|r| r.terms.iter().map(|&(j, _)| j)).collect();
            cols.sort_unstable();
            cols.dedup();
            let local = |j: usize| cols.binary_search(&j).expect("column of block");
            Component {
                kinds: vec![ColKind::S; cols.len()],
                obj: cols.iter().map(|&j| comp.obj[j]).collect(),
                rows: rows
                    .iter()
                    .map(|r| Row {
                        tag: r.tag,
                        terms: r.terms.iter().map(|&(j, c)| (local(j), c)).collect(),
                        sense: r.sense,
                        rhs: r.rhs,
                    })
                    .collect(),
                cols,
                runs: Vec::new(),
            }
        })
        .collect()
}

/// Fewest activations of `block` with the local columns in `fixed` set,
/// counting the fixed ones; `None` when no pattern exists. A search cut
/// short by the deadline yields its lower bound.
fn block_optimum(
    block: &Component,
    fixed: &[(usize, f64)],
    opts: &SolveOptions,
    deadline: Option<Instant>,
) -> Option<u64> {
    let mut value = vec![None; block.cols.len()];
    for &(j, v) in fixed {
        value[j] = Some(v);
    }
    let free: Vec<usize> = (0..block.cols.len()).filter(|&j| value[j].is_none()).collect();
    let ones = fixed.iter().filter(|f| f.1 > 0.5).count() as u64;
    let mut rows = Vec::new();
    for r in &block.rows {
        let shift: f64 = r.terms.iter().filter_map(|&(j, c)| value[j].map(|v| v * c)).sum();
        let terms: Vec<(usize, f64)> = r
            .terms
            .iter()
            .filter_map(|&(j, c)| free.binary_search(&j).ok().map(|l| (l, c)))
            .collect();
        let row = Row {
            tag: r.tag,
            terms,
            sense: r.sense,
            rhs: r.rhs - shift,
        };
        if row.terms.is_empty() {
            if row.violation(&[]) > ROW_TOL {
                return None;
            }
        } else {
            rows.push(row);
        }
    }
    let sub = Component {
        cols: free.clone(),
        kinds: vec![ColKind::S; free.len()],
        obj: vec![1.0; free.len()],
        rows,
        runs: Vec::new(),
    };
    match Search::new(&sub, opts, deadline).run() {
        Status::Optimal(v) => Some(ones + objective_of(&sub, &v)),
        Status::Timeout { bound, .. } => Some(ones + bound),
        Status::Infeasible { .. } | Status::Failed(_) => None,
    }
}

/// A block and the values fixed on its local columns.
type BlockFixing = (usize, Vec<(usize, bool)>);

struct Search<'a> {
    comp: &'a Component,
    opts: &'a SolveOptions,
    deadline: Option<Instant>,
    problem: Problem,
    vars: Vec<Variable>,
    s_cols: Vec<usize>,
    run_cols: Vec<usize>,
    /// Per-timestep blocks of the limit rows.
    blocks: Vec<Component>,
    /// Block and local column of each column.
    block_of: Vec<Option<(usize, usize)>>,
    /// Optimum of each block without fixings.
    block_floor: Vec<u64>,
    /// Block optima under fixings; `None` when infeasible.
    cache: HashMap<BlockFixing, Option<u64>>,
    /// Cardinality cuts added so far.
    covers: HashSet<(Vec<usize>, u64)>,
    root: Option<Solution>,
    /// Lower bound from the per-timestep subproblems.
    floor: u64,
    incumbent: Option<(u64, Vec<f64>)>,
    nodes: usize,
}

fn lp_bound(obj: f64) -> u64 {
    (obj - 1e-6).ceil().max(0.0) as u64
}

impl<'a> Search<'a> {
    fn new(comp: &'a Component, opts: &'a SolveOptions, deadline: Option<Instant>) -> Self {
        let (problem, vars) = box_problem(&comp.obj, &comp.rows);
        Search {
            comp,
            opts,
            deadline,
            problem,
            vars,
            s_cols: comp.s_cols().collect(),
            run_cols: (0..comp.kinds.len())
                .filter(|&c| comp.kinds[c] == ColKind::Run)
                .collect(),
            blocks: Vec::new(),
            block_of: vec![None; comp.cols.len()],
            block_floor: Vec::new(),
            cache: HashMap::new(),
            covers: HashSet::new(),
            root: None,
            floor: 0,
            incumbent: None,
            nodes: 0,
        }
    }

    fn values(&self, sol: &Solution) -> Vec<f64> {
        self.vars.iter().map(|&v| sol.var_value_raw(v)).collect()
    }

    fn frac(&self, v: f64) -> f64 {
        (v - v.round()).abs()
    }

    fn most_fractional(&self, x: &[f64], cols: &[usize]) -> Option<usize> {
        let tol = self.opts.int_tol;
        cols.iter()
            .copied()
            .filter(|&c| self.frac(x[c]) > tol)
            .max_by(|&a, &b| self.frac(x[a]).total_cmp(&self.frac(x[b])).then(b.cmp(&a)))
    }

    /// Lower bound at a node: its relaxation and the per-timestep optima
    /// under its fixings; `u64::MAX` when some timestep is infeasible.
    fn bound_of(&mut self, sol: &Solution, fixings: &[(usize, f64)]) -> u64 {
        let lp = lp_bound(sol.objective());
        match self.node_floor(fixings) {
            Some(f) => lp.max(f),
            None => u64::MAX,
        }
    }

    fn node_floor(&mut self, fixings: &[(usize, f64)]) -> Option<u64> {
        let mut by_block: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
        for &(c, v) in fixings {
            if let Some((b, j)) = self.block_of[c] {
                by_block.entry(b).or_default().push((j, v > 0.5));
            }
        }
        let mut floor = self.floor;
        for (b, mut fixed) in by_block {
            fixed.sort_unstable();
            let key = (b, fixed);
            let k = match self.cache.get(&key) {
                Some(&k) => k,
                None => {
                    let fx: Vec<(usize, f64)> = key.1.iter().map(|&(j, on)| (j, if on { 1.0 } else { 0.0 })).collect();
                    let k = block_optimum(&self.blocks[b], &fx, self.opts, self.deadline);
                    self.cache.insert(key, k);
                    k
                }
            }?;
            floor = floor - self.block_floor[b] + k.max(self.block_floor[b]);
        }
        Some(floor)
    }

    /// Whether a subtree with lower bound `b` cannot improve the incumbent.
    fn pruned(&self, b: u64) -> bool {
        self.incumbent
            .as_ref()
            .is_some_and(|(best, _)| b as f64 >= *best as f64 - self.opts.gap_tol)
    }

    /// Offers an activation pattern (transition columns are recomputed).
    fn offer(&mut self, mut x: Vec<f64>) {
        self.comp.complete(&mut x);
        if self.comp.max_violation(&x) > ROW_TOL {
            return;
        }
        let obj = objective_of(self.comp, &x);
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
            self.incumbent = Some((obj, x));
        }
    }

    fn round_with(&mut self, x: &[f64], f: impl Fn(f64) -> f64) {
        let mut y = x.to_vec();
        for &c in &self.s_cols {
            y[c] = f(x[c]).clamp(0.0, 1.0);
        }
        self.offer(y);
    }

    fn heuristics(&mut self, x: &[f64]) {
        let tol = self.opts.int_tol;
        self.round_with(x, |v| if v > tol { 1.0 } else { 0.0 });
        self.round_with(x, f64::round);
    }

    /// Solves the per-timestep subproblems, sets `floor` to the sum of
    /// their optima and offers their union as a candidate. Returns the rows
    /// of a block whose relaxation is infeasible.
    fn period_floor(&mut self) -> Result<Option<Vec<Row>>, String> {
        let blocks = period_blocks(self.comp);
        if blocks.is_empty() {
            return Ok(None);
        }
        self.blocks = blocks.clone();
        for (b, block) in blocks.iter().enumerate() {
            for (j, &c) in block.cols.iter().enumerate() {
                self.block_of[c] = Some((b, j));
            }
        }
        let mut cand = vec![0.0; self.comp.cols.len()];
        let mut floor = 0;
        let mut complete = true;
        let mut cuts = Vec::new();
        for block in &blocks {
            let mut sub = Search::new(block, self.opts, self.deadline);
            match sub.run() {
                Status::Optimal(v) => {
                    let k = objective_of(block, &v);
                    floor += k;
                    self.block_floor.push(k);
                    cuts.push((block.cols.clone(), k));
                    for (j, &c) in block.cols.iter().enumerate() {
                        cand[c] = v[j];
                    }
                }
                Status::Timeout { bound, .. } => {
                    floor += bound;
                    self.block_floor.push(bound);
                    complete = false;
                }
                Status::Infeasible { certificate, .. } => {
                    let rows = certificate.map(|_| {
                        let t = limit_period(&block.rows[0].tag);
                        self.comp
                            .rows
                            .iter()
                            .filter(|r| limit_period(&r.tag) == t)
                            .cloned()
                            .collect()
                    });
                    return Ok(Some(rows.unwrap_or_default()));
                }
                Status::Failed(e) => return Err(e),
            }
            self.nodes += sub.nodes;
        }
        self.floor = floor;
        // each timestep needs at least its own optimum of activations
        for (cols, k) in cuts {
            if k > 0 {
                self.add_cover(&cols, k);
            }
        }
        if complete {
            self.offer(cand);
        }
        Ok(None)
    }

    /// Cuts `sum_{j in C} s_j >= r` violated by `x`, one per timestep, where
    /// `C` holds the block columns below one and `r` is the fewest of them
    /// that meet the block's rows with every other relieving column on.
    fn separate(&self, x: &[f64]) -> Vec<(Vec<usize>, u64)> {
        let mut cuts = Vec::new();
        for block in &self.blocks {
            let relieving = |j: usize| {
                block
                    .rows
                    .iter()
                    .all(|r| r.terms.iter().all(|&(k, c)| k != j || c <= 0.0))
            };
            let on: Vec<bool> = (0..block.cols.len())
                .map(|j| x[block.cols[j]] >= 1.0 - 1e-6 && relieving(j))
                .collect();
            let free: Vec<usize> = (0..block.cols.len()).filter(|&j| !on[j]).collect();
            if free.is_empty() || free.len() == block.cols.len() {
                continue;
            }
            let lp: f64 = free.iter().map(|&j| x[block.cols[j]]).sum();
            let fixed: Vec<(usize, f64)> = (0..block.cols.len()).filter(|&j| on[j]).map(|j| (j, 1.0)).collect();
            if let Some(k) = block_optimum(block, &fixed, self.opts, self.deadline) {
                let r = k - fixed.len() as u64;
                if (r as f64) > lp + 1e-6 {
                    cuts.push((free.iter().map(|&j| block.cols[j]).collect(), r));
                }
            }
        }
        cuts
    }

    fn add_cover(&mut self, cols: &[usize], k: u64) {
        // skip repeated cuts
        if !self.covers.insert((cols.to_vec(), k)) {
            return;
        }
        let terms: Vec<(Variable, f64)> = cols.iter().map(|&c| (self.vars[c], 1.0)).collect();
        self.problem
            .add_constraint(terms.as_slice(), microlp::ComparisonOp::Ge, k as f64);
    }

    /// Re-solves from scratch with the given fixings.
    fn resolve(&self, fixings: &[(usize, f64)]) -> Result<Option<Solution>, String> {
        let mut p = self.problem.clone();
        for &(c, v) in fixings {
            p.add_constraint([(self.vars[c], 1.0)].as_slice(), microlp::ComparisonOp::Eq, v);
        }
        match p.solve() {
            Ok(SolveOutcome::Solution(s)) => Ok(Some(s)),
            Ok(SolveOutcome::Interrupted(_)) => Err("interrupted".into()),
            Err(microlp::Error::Infeasible) => Ok(None),
            Err(_) => {
                // the bounded simplex can fail to factor; retry with the box as rows
                let (mut q, vars) = row_box_problem(&self.comp.obj, &self.comp.rows);
                for &(c, v) in fixings {
                    q.add_constraint([(vars[c], 1.0)].as_slice(), microlp::ComparisonOp::Eq, v);
                }
                match q.solve() {
                    Ok(SolveOutcome::Solution(_)) => Err("LP solver failed on a feasible relaxation".into()),
                    Ok(SolveOutcome::Interrupted(_)) => Err("interrupted".into()),
                    Err(microlp::Error::Infeasible) => Ok(None),
                    Err(e) => Err(e.to_string()),
                }
            }
        }
    }

    /// Relaxation after fixing `col` to `v` in `sol`, warm-started.
    fn fix(&self, sol: Solution, fixings: &[(usize, f64)], col: usize, v: f64) -> Result<Option<Solution>, String> {
        match sol.fix_var(self.vars[col], v) {
            Ok(SolveOutcome::Solution(s)) => Ok(Some(s)),
            Err(microlp::Error::Infeasible) => Ok(None),
            _ => {
                let mut all = fixings.to_vec();
                all.push((col, v));
                self.resolve(&all)
            }
        }
    }

    /// Relaxation at an open node, replayed from the root.
    fn replay(&self, fixings: &[(usize, f64)]) -> Result<Option<Solution>, String> {
        let mut sol = self.root.clone().expect("root solved");
        for (i, &(c, v)) in fixings.iter().enumerate() {
            match self.fix(sol, &fixings[..i], c, v)? {
                Some(s) => sol = s,
                None => return Ok(None),
            }
        }
        Ok(Some(sol))
    }

    /// Greedy descent from the root: repeatedly fixes the largest
    /// fractional column of `cols` to one (or zero if that is infeasible).
    fn dive(&mut self, cols: &[usize]) -> Result<(), String> {
        let mut sol = self.root.clone().expect("root solved");
        let mut fixings = Vec::new();
        for _ in 0..self.comp.cols.len() {
            if self.out_of_time() || {
                let b = self.bound_of(&sol, &fixings);
                self.pruned(b)
            } {
                return Ok(());
            }
            let x = self.values(&sol);
            let pick = cols
                .iter()
                .chain(&self.s_cols)
                .copied()
                .filter(|&c| self.frac(x[c]) > self.opts.int_tol)
                .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)));
            let Some(col) = pick else {
                self.offer(x);
                return Ok(());
            };
            sol = match self.fix(sol.clone(), &fixings, col, 1.0)? {
                Some(s) => {
                    fixings.push((col, 1.0));
                    s
                }
                None => match self.fix(sol, &fixings, col, 0.0)? {
                    Some(s) => {
                        fixings.push((col, 0.0));
                        s
                    }
                    None => return Ok(()),
                },
            };
        }
        Ok(())
    }

    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn limit_hit(&self) -> bool {
        self.opts.node_limit.is_some_and(|n| self.nodes >= n) || self.out_of_time()
    }

    fn run(&mut self) -> Status {
        match self.search() {
            Ok(status) => status,
            Err(e) => Status::Failed(e),
        }
    }

    fn search(&mut self) -> Result<Status, String> {
        if self.comp.rows.is_empty() {
            return Ok(Status::Optimal(vec![0.0; self.comp.cols.len()]));
        }
        match self.resolve(&[])? {
            Some(sol) => self.root = Some(sol),
            None => {
                return Ok(Status::Infeasible {
                    reason: "relaxation infeasible".into(),
                    certificate: Some(self.comp.rows.clone()),
                })
            }
        }
        if let Some(rows) = self.period_floor()? {
            return Ok(Status::Infeasible {
                reason: "a timestep admits no activation pattern".into(),
                certificate: (!rows.is_empty()).then_some(rows),
            });
        }
        match self.resolve(&[])? {
            Some(sol) => self.root = Some(sol),
            None => {
                return Ok(Status::Infeasible {
                    reason: "no activation pattern meets every timestep".into(),
                    certificate: None,
                })
            }
        }
        for _ in 0..MAX_CUT_ROUNDS {
            if self.out_of_time() {
                break;
            }
            let x = self.values(self.root.as_ref().expect("root solved"));
            let cuts = self.separate(&x);
            if cuts.is_empty() {
                break;
            }
            for (cols, k) in cuts {
                self.add_cover(&cols, k);
            }
            match self.resolve(&[])? {
                Some(sol) => self.root = Some(sol),
                None => {
                    return Ok(Status::Infeasible {
                        reason: "no activation pattern meets every timestep".into(),
                        certificate: None,
                    })
                }
            }
        }
        let root = self.root.clone().expect("root solved");
        let x = self.values(&root);
        self.heuristics(&x);
        self.dive(&[])?;
        let runs = self.run_cols.clone();
        self.dive(&runs)?;

        let mut heap: BinaryHeap<Reverse<(u64, Reverse<usize>, usize)>> = BinaryHeap::new();
        let mut slab: Vec<Option<Open>> = Vec::new();
        let push = |heap: &mut BinaryHeap<_>, slab: &mut Vec<Option<Open>>, open: Open| {
            heap.push(Reverse((open.bound, Reverse(open.depth), slab.len())));
            slab.push(Some(open));
        };
        push(
            &mut heap,
            &mut slab,
            Open {
                bound: self.bound_of(&root, &[]),
                depth: 0,
                fixings: Vec::new(),
            },
        );

        while let Some(Reverse((bound, _, id))) = heap.peek().copied() {
            if self.pruned(bound) {
                break;
            }
            if self.limit_hit() {
                let best = self.incumbent.as_ref().map(|(b, _)| *b);
                return Ok(Status::Timeout {
                    bound: best.map_or(bound, |b| b.min(bound)),
                    incumbent: self.incumbent.take().map(|(_, x)| x),
                });
            }
            heap.pop();
            let open = slab[id].take().expect("node evaluated once");
            let Some(mut sol) = self.replay(&open.fixings)? else {
                continue;
            };
            let mut fixings = open.fixings;
            let mut depth = open.depth;
            // plunge while the better child survives
            loop {
                let bound = self.bound_of(&sol, &fixings);
                if self.pruned(bound) {
                    break;
                }
                if self.limit_hit() {
                    push(&mut heap, &mut slab, Open { bound, depth, fixings });
                    break;
                }
                self.nodes += 1;
                let x = self.values(&sol);
                let branch = self.most_fractional(&x, &self.s_cols).or_else(|| {
                    self.round_with(&x, f64::round);
                    self.most_fractional(&x, &self.run_cols)
                });
                let Some(col) = branch else {
                    break;
                };
                self.heuristics(&x);
                let mut kids = Vec::with_capacity(2);
                for v in [1.0, 0.0] {
                    if let Some(s) = self.fix(sol.clone(), &fixings, col, v)? {
                        let mut f = fixings.clone();
                        f.push((col, v));
                        let b = self.bound_of(&s, &f);
                        if !self.pruned(b) {
                            kids.push((b, v, s));
                        }
                    }
                }
                // stable: ties keep the activation branch first
                kids.sort_by_key(|k| k.0);
                let mut kids = kids.into_iter();
                let Some((_, v, s)) = kids.next() else {
                    break;
                };
                for (b, w, _) in kids {
                    let mut f = fixings.clone();
                    f.push((col, w));
                    push(
                        &mut heap,
                        &mut slab,
                        Open {
                            bound: b,
                            depth: depth + 1,
                            fixings: f,
                        },
                    );
                }
                fixings.push((col, v));
                depth += 1;
                sol = s;
            }
        }
        Ok(match self.incumbent.take() {
            Some((_, x)) => Status::Optimal(x),
            None => Status::Infeasible {
                reason: format!("no integer point after {} nodes", self.nodes),
                certificate: None,
            },
        })
    }
}
