//! Sparse linear model container shared by the power-flow blocks and the
//! scheduling model, plus the textual LP-format writer and a reader for
//! externally produced variable assignments.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::net::Phase;

/// Identity of a model variable. Indices refer to positions in the feeder's
/// bus, branch and user vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    /// Squared voltage magnitude.
    U { bus: usize, phase: Phase, t: usize },
    /// Real part of the diagonal branch flow.
    LambdaRe { branch: usize, phase: Phase, t: usize },
    /// Imaginary part of the diagonal branch flow.
    LambdaIm { branch: usize, phase: Phase, t: usize },
    /// Active demand of a user on one phase.
    P { user: usize, phase: Phase, t: usize },
    /// Reactive demand of a user on one phase.
    Q { user: usize, phase: Phase, t: usize },
    /// Reduction status.
    S { user: usize, t: usize },
    /// Reduction activation.
    Y { user: usize, t: usize },
    /// Reduction deactivation.
    Z { user: usize, t: usize },
}

impl VarKey {
    pub fn is_binary(&self) -> bool {
        matches!(self, VarKey::S { .. } | VarKey::Y { .. } | VarKey::Z { .. })
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarKey::U { bus, phase, t } => write!(f, "u_{bus}_{phase}_{t}"),
            VarKey::LambdaRe { branch, phase, t } => write!(f, "lre_{branch}_{phase}_{t}"),
            VarKey::LambdaIm { branch, phase, t } => write!(f, "lim_{branch}_{phase}_{t}"),
            VarKey::P { user, phase, t } => write!(f, "p_{user}_{phase}_{t}"),
            VarKey::Q { user, phase, t } => write!(f, "q_{user}_{phase}_{t}"),
            VarKey::S { user, t } => write!(f, "s_{user}_{t}"),
            VarKey::Y { user, t } => write!(f, "y_{user}_{t}"),
            VarKey::Z { user, t } => write!(f, "z_{user}_{t}"),
        }
    }
}

/// Deterministic variable index map: indices are assigned in registration
/// order.
#[derive(Clone, Debug, Default)]
pub struct VarRegistry {
    keys: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: VarKey) -> usize {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.keys.len();
        self.keys.push(key);
        self.index.insert(key, i);
        i
    }

    pub fn get(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, i: usize) -> VarKey {
        self.keys[i]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    pub fn binary_count(&self) -> usize {
        self.keys.iter().filter(|k| k.is_binary()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

/// Row identity, rendered into a row name on export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowTag {
    Balance {
        bus: usize,
        phase: Phase,
        t: usize,
        part: Part,
    },
    Ohm {
        branch: usize,
        phase: Phase,
        t: usize,
    },
    VoltageMin {
        bus: usize,
        phase: Phase,
        t: usize,
    },
    VoltageMax {
        bus: usize,
        phase: Phase,
        t: usize,
    },
    Thermal {
        branch: usize,
        phase: Phase,
        t: usize,
        side: usize,
    },
    ResponseP {
        user: usize,
        phase: Phase,
        t: usize,
    },
    ResponseQ {
        user: usize,
        phase: Phase,
        t: usize,
    },
    Transition {
        user: usize,
        t: usize,
    },
    Activations {
        user: usize,
    },
    Duration {
        user: usize,
        t: usize,
    },
    Gap {
        user: usize,
        t: usize,
    },
    /// No deactivation at the first timestep.
    Boundary {
        user: usize,
    },
    /// Activation equals the coverage by reduction runs (solver internal).
    RunLink {
        user: usize,
        t: usize,
    },
    /// At most one run, with its trailing gap, covers a step (solver internal).
    RunPacking {
        user: usize,
        t: usize,
    },
    /// Run count limit (solver internal).
    RunCount {
        user: usize,
    },
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RowTag::Balance { bus, phase, t, part } => {
                let p = if part == Part::Re { "re" } else { "im" };
                write!(f, "bal_{p}_{bus}_{phase}_{t}")
            }
            RowTag::Ohm { branch, phase, t } => write!(f, "ohm_{branch}_{phase}_{t}"),
            RowTag::VoltageMin { bus, phase, t } => write!(f, "vmin_{bus}_{phase}_{t}"),
            RowTag::VoltageMax { bus, phase, t } => write!(f, "vmax_{bus}_{phase}_{t}"),
            RowTag::Thermal { branch, phase, t, side } => write!(f, "therm_{branch}_{phase}_{t}_{side}"),
            RowTag::ResponseP { user, phase, t } => write!(f, "resp_p_{user}_{phase}_{t}"),
            RowTag::ResponseQ { user, phase, t } => write!(f, "resp_q_{user}_{phase}_{t}"),
            RowTag::Transition { user, t } => write!(f, "trans_{user}_{t}"),
            RowTag::Activations { user } => write!(f, "act_{user}"),
            RowTag::Duration { user, t } => write!(f, "dur_{user}_{t}"),
            RowTag::Gap { user, t } => write!(f, "gap_{user}_{t}"),
            RowTag::Boundary { user } => write!(f, "bnd_{user}"),
            RowTag::RunLink { user, t } => write!(f, "rlink_{user}_{t}"),
            RowTag::RunPacking { user, t } => write!(f, "rpack_{user}_{t}"),
            RowTag::RunCount { user } => write!(f, "rcount_{user}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub tag: RowTag,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A set of linear rows over registry variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearConstraintBlock {
    pub rows: Vec<Row>,
}

impl LinearConstraintBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tag: RowTag, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { tag, terms, sense, rhs });
    }

    pub fn extend(&mut self, other: LinearConstraintBlock) {
        self.rows.extend(other.rows);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max)
    }

    /// Plain-text listing, one `row<TAB>variable<TAB>coefficient` line per
    /// nonzero plus one `row<TAB>rhs<TAB>sense value` line per row.
    pub fn dump(&self, registry: &VarRegistry) -> String {
        let mut out = String::new();
        for row in &self.rows {
            for &(i, c) in &row.terms {
                let _ = writeln!(out, "{}\t{}\t{}", row.tag, registry.key(i), c);
            }
            let _ = writeln!(out, "{}\trhs\t{} {}", row.tag, row.sense.symbol(), row.rhs);
        }
        out
    }
}

/// Minimization problem over registry variables. Binary variables are boxed
/// to [0, 1]; every other variable is free.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub vars: VarRegistry,
    pub objective: Vec<(usize, f64)>,
    pub constraints: LinearConstraintBlock,
}

impl LinearProgram {
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum()
    }
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn write_expr(out: &mut String, terms: &[(usize, f64)], vars: &VarRegistry) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&vars.keys().first().map(|k| k.to_string()).unwrap_or_default());
        return;
    }
    for (n, &(i, c)) in terms.iter().enumerate() {
        if n > 0 && n % 6 == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", fmt_num(c.abs()), vars.key(i));
    }
}

/// Renders a program in the CPLEX LP text format.
pub fn write_lp_format(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str("\\ contract-based demand reduction model\nMinimize\n obj:");
    write_expr(&mut out, &lp.objective, &lp.vars);
    out.push_str("\nSubject To\n");
    for row in &lp.constraints.rows {
        let _ = write!(out, " {}:", row.tag);
        write_expr(&mut out, &row.terms, &lp.vars);
        let _ = writeln!(out, " {} {}", row.sense.symbol(), fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for key in lp.vars.keys() {
        if key.is_binary() {
            let _ = writeln!(out, " 0 <= {key} <= 1");
        } else {
            let _ = writeln!(out, " {key} free");
        }
    }
    out.push_str("Binaries\n");
    let mut line = String::new();
    for key in lp.vars.keys().iter().filter(|k| k.is_binary()) {
        if line.len() > 70 {
            let _ = writeln!(out, "{line}");
            line.clear();
        }
        let _ = write!(line, " {key}");
    }
    if !line.is_empty() {
        let _ = writeln!(out, "{line}");
    }
    out.push_str("End\n");
    out
}

/// Reads `name value` pairs from a solver solution file. Lines starting with
/// `#` or `\` are comments; the first token that names a variable of `vars`
/// is followed by its value, so both `name value` and the index-prefixed
/// `idx name value ...` layouts are accepted.
pub fn parse_assignment(text: &str, vars: &VarRegistry) -> Result<Vec<(usize, f64)>, String> {
    let by_name: HashMap<String, usize> = vars
        .keys()
        .iter()
        .enumerate()
        .map(|(i, k)| (k.to_string(), i))
        .collect();
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('\\') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some(pos) = tokens.iter().position(|t| by_name.contains_key(*t)) else {
            continue;
        };
        let value = tokens
            .get(pos + 1)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| format!("line {}: missing value for {}", ln + 1, tokens[pos]))?;
        out.push((by_name[tokens[pos]], value));
    }
    Ok(out)
}
