use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::phase::{Phase, PhaseSet};
use super::NetError;

/// Branch impedance in per unit, stored as a full 3x3 matrix. Entries on
/// phases the branch does not carry are zero.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseMatrix(pub [[Complex64; 3]; 3]);

impl PhaseMatrix {
    pub fn zero() -> Self {
        PhaseMatrix([[Complex64::new(0.0, 0.0); 3]; 3])
    }

    pub fn get(&self, p: Phase, q: Phase) -> Complex64 {
        self.0[p.index()][q.index()]
    }

    pub fn set(&mut self, p: Phase, q: Phase, v: Complex64) {
        self.0[p.index()][q.index()] = v;
    }

    /// Diagonal matrix with the same series impedance on every listed phase.
    pub fn diagonal(phases: PhaseSet, z: Complex64) -> Self {
        let mut m = PhaseMatrix::zero();
        for p in phases.iter() {
            m.set(p, p, z);
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).norm() <= tol))
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    pub vmin_pu: f64,
    pub vmax_pu: f64,
    pub is_source: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    pub z: PhaseMatrix,
    /// Per-phase apparent power rating, p.u.
    pub s_rated_pu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserAttachment {
    pub user_id: String,
    pub bus_id: String,
    pub phases: PhaseSet,
}

/// A three-phase low-voltage feeder in per unit on a single-phase base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feeder {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub users: Vec<UserAttachment>,
    /// Line-to-neutral base voltage, volts.
    pub base_voltage_v: f64,
    /// Single-phase base power, VA.
    pub base_power_va: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IssueKind {
    DuplicateBus,
    SourceCount,
    BusPhases,
    VoltageBand,
    UnknownBus,
    PhaseMismatch,
    ImpedanceAsymmetry,
    NonPositiveResistance,
    NonPositiveRating,
    NonRadial,
    DuplicateUser,
    InjectiveMapping,
    Base,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IssueKind::DuplicateBus => "duplicate bus id",
            IssueKind::SourceCount => "source bus count",
            IssueKind::BusPhases => "empty bus phases",
            IssueKind::VoltageBand => "invalid voltage band",
            IssueKind::UnknownBus => "unknown bus",
            IssueKind::PhaseMismatch => "phase mismatch",
            IssueKind::ImpedanceAsymmetry => "impedance asymmetry",
            IssueKind::NonPositiveResistance => "non-positive resistance",
            IssueKind::NonPositiveRating => "non-positive rating",
            IssueKind::NonRadial => "non-radial",
            IssueKind::DuplicateUser => "duplicate user id",
            IssueKind::InjectiveMapping => "injective mapping violated",
            IssueKind::Base => "invalid base",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub kind: IssueKind,
    pub detail: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

/// Every invariant violation found in a feeder. Empty iff the feeder is valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    fn push(&mut self, kind: IssueKind, detail: impl Into<String>) {
        self.issues.push(Issue {
            kind,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

const SYMMETRY_TOL: f64 = 1e-12;

pub fn validate_feeder(feeder: &Feeder) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(feeder.base_voltage_v > 0.0 && feeder.base_power_va > 0.0) {
        report.push(
            IssueKind::Base,
            format!(
                "bases must be positive (got {} V, {} VA)",
                feeder.base_voltage_v, feeder.base_power_va
            ),
        );
    }

    let mut bus_index: HashMap<&str, usize> = HashMap::new();
    for (i, bus) in feeder.buses.iter().enumerate() {
        if bus_index.insert(bus.id.as_str(), i).is_some() {
            report.push(IssueKind::DuplicateBus, format!("bus '{}'", bus.id));
        }
        if bus.phases.is_empty() {
            report.push(IssueKind::BusPhases, format!("bus '{}'", bus.id));
        }
        if !bus.is_source && !(bus.vmin_pu > 0.0 && bus.vmin_pu < bus.vmax_pu) {
            report.push(
                IssueKind::VoltageBand,
                format!("bus '{}': [{}, {}]", bus.id, bus.vmin_pu, bus.vmax_pu),
            );
        }
    }
    let sources = feeder.buses.iter().filter(|b| b.is_source).count();
    if sources != 1 {
        report.push(IssueKind::SourceCount, format!("expected 1, found {sources}"));
    }

    for (k, br) in feeder.branches.iter().enumerate() {
        let label = format!("branch {k} ({} -> {})", br.from, br.to);
        let from = bus_index.get(br.from.as_str()).map(|&i| &feeder.buses[i]);
        let to = bus_index.get(br.to.as_str()).map(|&i| &feeder.buses[i]);
        match (from, to) {
            (Some(f), Some(t)) => {
                if br.phases.is_empty() || !br.phases.is_subset_of(f.phases) || !br.phases.is_subset_of(t.phases) {
                    report.push(
                        IssueKind::PhaseMismatch,
                        format!(
                            "{label}: branch phases {} vs endpoints {} / {}",
                            br.phases, f.phases, t.phases
                        ),
                    );
                }
            }
            _ => report.push(IssueKind::UnknownBus, label.clone()),
        }
        if !br.z.is_symmetric(SYMMETRY_TOL) {
            report.push(IssueKind::ImpedanceAsymmetry, label.clone());
        }
        for p in br.phases.iter() {
            if !(br.z.get(p, p).re > 0.0) {
                report.push(IssueKind::NonPositiveResistance, format!("{label}: phase {p}"));
            }
        }
        if !(br.s_rated_pu > 0.0) {
            report.push(IssueKind::NonPositiveRating, label);
        }
    }

    if let Err(detail) = tree_check(feeder, &bus_index) {
        report.push(IssueKind::NonRadial, detail);
    }

    let mut user_ids: HashMap<&str, ()> = HashMap::new();
    let mut hosted: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for u in &feeder.users {
        if user_ids.insert(u.user_id.as_str(), ()).is_some() {
            report.push(IssueKind::DuplicateUser, format!("user '{}'", u.user_id));
        }
        match bus_index.get(u.bus_id.as_str()) {
            Some(&b) => {
                let bus = &feeder.buses[b];
                if u.phases.is_empty() || !u.phases.is_subset_of(bus.phases) {
                    report.push(
                        IssueKind::PhaseMismatch,
                        format!("user '{}': phases {} vs bus {}", u.user_id, u.phases, bus.phases),
                    );
                }
            }
            None => report.push(
                IssueKind::UnknownBus,
                format!("user '{}' at bus '{}'", u.user_id, u.bus_id),
            ),
        }
        hosted.entry(u.bus_id.as_str()).or_default().push(&u.user_id);
    }
    for (bus, users) in hosted {
        if users.len() > 1 {
            report.push(
                IssueKind::InjectiveMapping,
                format!("bus '{bus}' hosts users {}", users.join(", ")),
            );
        }
    }

    report
}

/// Tree check: |branches| = |buses| - 1 and every bus reachable from the source.
fn tree_check(feeder: &Feeder, bus_index: &HashMap<&str, usize>) -> Result<(), String> {
    let n = feeder.buses.len();
    if feeder.branches.len() + 1 != n {
        return Err(format!("{} branches for {} buses", feeder.branches.len(), n));
    }
    let Some(source) = feeder.buses.iter().position(|b| b.is_source) else {
        return Err("no source bus".into());
    };
    let adj = adjacency(feeder, bus_index);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([source]);
    seen[source] = true;
    while let Some(b) = queue.pop_front() {
        for &(nb, _) in &adj[b] {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(b) => Err(format!(
            "bus '{}' unreachable from source (cycle elsewhere)",
            feeder.buses[b].id
        )),
        None => Ok(()),
    }
}

fn adjacency(feeder: &Feeder, bus_index: &HashMap<&str, usize>) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); feeder.buses.len()];
    for (k, br) in feeder.branches.iter().enumerate() {
        if let (Some(&f), Some(&t)) = (bus_index.get(br.from.as_str()), bus_index.get(br.to.as_str())) {
            adj[f].push((t, k));
            if f != t {
                adj[t].push((f, k));
            }
        }
    }
    adj
}

/// Breadth-first ordering from the source; siblings visited in ascending id
/// order. Each entry is `(bus index, parent branch index)`.
pub fn radial_ordering(feeder: &Feeder) -> Result<Vec<(usize, Option<usize>)>, NetError> {
    let mut bus_index: HashMap<&str, usize> = HashMap::new();
    for (i, b) in feeder.buses.iter().enumerate() {
        if bus_index.insert(b.id.as_str(), i).is_some() {
            return Err(NetError::NonRadial(format!("duplicate bus '{}'", b.id)));
        }
    }
    let sources: Vec<usize> = (0..feeder.buses.len()).filter(|&i| feeder.buses[i].is_source).collect();
    let [source] = sources[..] else {
        return Err(NetError::NonRadial(format!(
            "expected one source bus, found {}",
            sources.len()
        )));
    };
    tree_check(feeder, &bus_index).map_err(NetError::NonRadial)?;

    let mut adj = adjacency(feeder, &bus_index);
    for list in adj.iter_mut() {
        list.sort_by(|a, b| feeder.buses[a.0].id.cmp(&feeder.buses[b.0].id).then(a.1.cmp(&b.1)));
    }
    let mut order = Vec::with_capacity(feeder.buses.len());
    let mut seen = vec![false; feeder.buses.len()];
    let mut queue = VecDeque::from([(source, None)]);
    seen[source] = true;
    while let Some((b, parent)) = queue.pop_front() {
        order.push((b, parent));
        for &(nb, k) in &adj[b] {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back((nb, Some(k)));
            }
        }
    }
    Ok(order)
}

/// A validated feeder with its radial structure resolved. All downstream
/// computations take a `Network`.
#[derive(Clone, Debug)]
pub struct Network {
    pub feeder: Feeder,
    pub source: usize,
    /// Buses in breadth-first order from the source.
    pub order: Vec<usize>,
    /// Parent branch of each bus (`None` for the source).
    pub parent_branch: Vec<Option<usize>>,
    /// Upstream bus of each branch.
    pub branch_up: Vec<usize>,
    /// Downstream bus of each branch.
    pub branch_down: Vec<usize>,
    /// Bus hosting each user, in `feeder.users` order.
    pub user_bus: Vec<usize>,
    pub bus_user: Vec<Option<usize>>,
}

impl Network {
    pub fn new(feeder: Feeder) -> Result<Self, NetError> {
        let report = validate_feeder(&feeder);
        if !report.is_empty() {
            return Err(NetError::Invalid(report));
        }
        let ordering = radial_ordering(&feeder)?;
        let nb = feeder.buses.len();
        let nl = feeder.branches.len();
        let mut parent_branch = vec![None; nb];
        let mut branch_up = vec![0; nl];
        let mut branch_down = vec![0; nl];
        let index: HashMap<&str, usize> = feeder
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        for &(b, pb) in &ordering {
            parent_branch[b] = pb;
            if let Some(k) = pb {
                let br = &feeder.branches[k];
                let (f, t) = (index[br.from.as_str()], index[br.to.as_str()]);
                branch_down[k] = b;
                branch_up[k] = if t == b { f } else { t };
            }
        }
        let user_bus: Vec<usize> = feeder.users.iter().map(|u| index[u.bus_id.as_str()]).collect();
        let mut bus_user = vec![None; nb];
        for (u, &b) in user_bus.iter().enumerate() {
            bus_user[b] = Some(u);
        }
        let source = ordering[0].0;
        let mut report = ValidationReport::default();
        let energized = |b: usize| match parent_branch[b] {
            None => feeder.buses[b].phases,
            Some(k) => feeder.branches[k].phases,
        };
        for (k, br) in feeder.branches.iter().enumerate() {
            if !br.phases.is_subset_of(energized(branch_up[k])) {
                report.push(
                    IssueKind::PhaseMismatch,
                    format!("branch {k} carries phases not energized upstream"),
                );
            }
        }
        for (u, &b) in user_bus.iter().enumerate() {
            if !feeder.users[u].phases.is_subset_of(energized(b)) {
                report.push(
                    IssueKind::PhaseMismatch,
                    format!("user '{}' on de-energized phase", feeder.users[u].user_id),
                );
            }
        }
        if !report.is_empty() {
            return Err(NetError::Invalid(report));
        }
        Ok(Network {
            order: ordering.iter().map(|&(b, _)| b).collect(),
            feeder,
            source,
            parent_branch,
            branch_up,
            branch_down,
            user_bus,
            bus_user,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.feeder.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.feeder.branches.len()
    }

    pub fn n_users(&self) -> usize {
        self.feeder.users.len()
    }

    pub fn bus(&self, i: usize) -> &Bus {
        &self.feeder.buses[i]
    }

    pub fn branch(&self, k: usize) -> &Branch {
        &self.feeder.branches[k]
    }

    pub fn user(&self, u: usize) -> &UserAttachment {
        &self.feeder.users[u]
    }

    /// Phases actually fed from the source: those of the parent branch.
    pub fn energized(&self, bus: usize) -> PhaseSet {
        match self.parent_branch[bus] {
            None => self.feeder.buses[bus].phases,
            Some(k) => self.feeder.branches[k].phases,
        }
    }

    /// Branches in breadth-first order of their downstream bus.
    pub fn branches_in_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().filter_map(move |&b| self.parent_branch[b])
    }
}
