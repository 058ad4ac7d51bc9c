use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::{Deserialize, Serialize};

use super::model::MilpModel;
use super::reduced::Reduced;
use super::MilpError;
use crate::lp::{Row, RowTag, Sense, VarKey};

/// Row scaled so its largest coefficient has magnitude one.
pub(crate) fn scaled(row: &Row) -> Row {
    let m = row.terms.iter().map(|&(_, c)| c.abs()).fold(0.0, f64::max);
    if m == 0.0 {
        return row.clone();
    }
    Row {
        tag: row.tag,
        terms: row.terms.iter().map(|&(j, c)| (j, c / m)).collect(),
        sense: row.sense,
        rhs: row.rhs / m,
    }
}

fn op(sense: Sense) -> ComparisonOp {
    match sense {
        Sense::Le => ComparisonOp::Le,
        Sense::Ge => ComparisonOp::Ge,
        Sense::Eq => ComparisonOp::Eq,
    }
}

/// LP over `[0, 1]` boxed columns.
pub(crate) fn box_problem(obj: &[f64], rows: &[Row]) -> (Problem, Vec<Variable>) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = obj.iter().map(|&c| p.add_var(c, (0.0, 1.0))).collect();
    for row in rows {
        let r = scaled(row);
        let terms: Vec<(Variable, f64)> = r.terms.iter().map(|&(j, c)| (vars[j], c)).collect();
        p.add_constraint(terms.as_slice(), op(r.sense), r.rhs);
    }
    (p, vars)
}

/// Same LP as [`box_problem`] with the upper bounds written as rows.
pub(crate) fn row_box_problem(obj: &[f64], rows: &[Row]) -> (Problem, Vec<Variable>) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = obj.iter().map(|&c| p.add_var(c, (0.0, f64::INFINITY))).collect();
    for &v in &vars {
        p.add_constraint([(v, 1.0)].as_slice(), ComparisonOp::Le, 1.0);
    }
    for row in rows {
        let r = scaled(row);
        let terms: Vec<(Variable, f64)> = r.terms.iter().map(|&(j, c)| (vars[j], c)).collect();
        p.add_constraint(terms.as_slice(), op(r.sense), r.rhs);
    }
    (p, vars)
}

/// One row of an infeasibility certificate with its multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub row: String,
    pub sense: String,
    pub terms: Vec<(String, f64)>,
    pub rhs: f64,
    pub multiplier: f64,
}

/// Farkas-type proof that rows `a x <= b` / `a x = b` have no solution in
/// the unit box: with `g = sum_r y_r a_r`, the value
/// `sum_r y_r b_r + sum_j max(0, -g_j)` is negative, while `y_r >= 0` on
/// inequality rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    pub rows: Vec<CertificateRow>,
}

impl FarkasCertificate {
    pub fn value(&self) -> f64 {
        let mut g: std::collections::BTreeMap<&str, f64> = Default::default();
        let mut v = 0.0;
        for r in &self.rows {
            v += r.multiplier * r.rhs;
            for (name, c) in &r.terms {
                *g.entry(name.as_str()).or_default() += r.multiplier * c;
            }
        }
        v + g.values().map(|&gj| (-gj).max(0.0)).sum::<f64>()
    }

    /// Multiplier signs are admissible and the combined row is violated.
    pub fn is_valid(&self) -> bool {
        let signs = self.rows.iter().all(|r| r.sense == "=" || r.multiplier >= 0.0);
        signs && self.value() < -1e-9
    }
}

/// Certificate for `rows` over columns named by `names`, or `None` when the
/// auxiliary LP finds none.
pub(crate) fn farkas(rows: &[Row], names: &dyn Fn(usize) -> String, n_cols: usize) -> Option<FarkasCertificate> {
    let rows: Vec<Row> = rows.iter().map(scaled).collect();
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let ys: Vec<Variable> = rows
        .iter()
        .map(|r| match r.sense {
            Sense::Eq => p.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)),
            _ => p.add_var(0.0, (0.0, f64::INFINITY)),
        })
        .collect();
    let vs: Vec<Variable> = (0..n_cols).map(|_| p.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let mut cols: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); n_cols];
    for (r, row) in rows.iter().enumerate() {
        let sign = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
        for &(j, c) in &row.terms {
            cols[j].push((ys[r], sign * c));
        }
    }
    for (j, mut col) in cols.into_iter().enumerate() {
        col.push((vs[j], 1.0));
        p.add_constraint(col.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let mut norm: Vec<(Variable, f64)> = rows
        .iter()
        .enumerate()
        .map(|(r, row)| (ys[r], if row.sense == Sense::Ge { -row.rhs } else { row.rhs }))
        .collect();
    norm.extend(vs.iter().map(|&v| (v, 1.0)));
    p.add_constraint(norm.as_slice(), ComparisonOp::Eq, -1.0);
    let sol = p.solve().ok()?.into_solution().ok()?;
    let cert = FarkasCertificate {
        rows: rows
            .iter()
            .enumerate()
            .filter_map(|(r, row)| {
                let y = sol.var_value_raw(ys[r]);
                if y.abs() < 1e-12 {
                    return None;
                }
                let (terms, rhs, sense) = match row.sense {
                    Sense::Ge => (row.terms.iter().map(|&(j, c)| (names(j), -c)).collect(), -row.rhs, "<="),
                    Sense::Le => (row.terms.iter().map(|&(j, c)| (names(j), c)).collect(), row.rhs, "<="),
                    Sense::Eq => (row.terms.iter().map(|&(j, c)| (names(j), c)).collect(), row.rhs, "="),
                };
                Some(CertificateRow {
                    row: row.tag.to_string(),
                    sense: sense.into(),
                    terms,
                    rhs,
                    multiplier: y,
                })
            })
            .collect(),
    };
    cert.is_valid().then_some(cert)
}

/// Certificate for a single row whose variables are all fixed; `rhs` is
/// the right-hand side after substituting them.
pub(crate) fn constant_row_certificate(tag: RowTag, sense: Sense, rhs: f64) -> FarkasCertificate {
    let (sense, rhs, multiplier) = match sense {
        Sense::Le => ("<=", rhs, 1.0),
        Sense::Ge => ("<=", -rhs, 1.0),
        Sense::Eq => ("=", rhs, -rhs.signum()),
    };
    FarkasCertificate {
        rows: vec![CertificateRow {
            row: tag.to_string(),
            sense: sense.into(),
            terms: Vec::new(),
            rhs,
            multiplier,
        }],
    }
}

#[derive(Clone, Debug)]
pub enum LpRelaxation {
    /// Optimal relaxation: objective and the value of every binary in
    /// registry order.
    Optimal {
        objective: f64,
        binaries: Vec<f64>,
    },
    Infeasible(Option<FarkasCertificate>),
    NumericalFailure(String),
}

/// Solves the relaxation of `model` with binaries boxed to `[0, 1]` and the
/// given binaries fixed.
pub fn lp_relax_solve(model: &MilpModel, fixed: &[(VarKey, f64)]) -> Result<LpRelaxation, MilpError> {
    let mut fixings = Vec::with_capacity(fixed.len());
    for (key, v) in fixed {
        match model.lp.vars.get(key) {
            Some(i) if i < model.beta => fixings.push((i, *v)),
            _ => return Err(MilpError::Dimension(format!("{key} is not a binary of the model"))),
        }
    }
    let red = Reduced::build(model, &fixings, false);
    if let Some((tag, sense, rhs)) = red.infeasible {
        return Ok(LpRelaxation::Infeasible(Some(constant_row_certificate(
            tag, sense, rhs,
        ))));
    }
    let fixed_obj: f64 = model.lp.objective.iter().map(|&(i, c)| c * red.bin_value[i]).sum();
    let (problem, vars) = box_problem(&red.obj, &red.rows);
    let name = |j: usize| model.lp.vars.key(red.col_bin[j]).to_string();
    match problem.solve() {
        Ok(outcome) => match outcome.into_solution() {
            Ok(sol) => {
                let mut binaries = red.bin_value.clone();
                for (j, &i) in red.col_bin.iter().enumerate() {
                    binaries[i] = sol.var_value_raw(vars[j]);
                }
                Ok(LpRelaxation::Optimal {
                    objective: sol.objective() + fixed_obj,
                    binaries,
                })
            }
            Err(_) => Ok(LpRelaxation::NumericalFailure("interrupted".into())),
        },
        Err(microlp::Error::Infeasible) => Ok(LpRelaxation::Infeasible(farkas(&red.rows, &name, red.n_cols()))),
        Err(e) => Ok(LpRelaxation::NumericalFailure(e.to_string())),
    }
}

/// Relaxation of the full model (all power-flow variables kept), for
/// cross-checking the projection. Returns `None` when infeasible.
pub fn full_lp_relaxation(model: &MilpModel) -> Result<Option<f64>, MilpError> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let mut obj = vec![0.0; model.lp.vars.len()];
    for &(i, c) in &model.lp.objective {
        obj[i] += c;
    }
    let vars: Vec<Variable> = model
        .lp
        .vars
        .keys()
        .iter()
        .zip(&obj)
        .map(|(k, &c)| {
            if k.is_binary() {
                p.add_var(c, (0.0, 1.0))
            } else {
                p.add_var(c, (f64::NEG_INFINITY, f64::INFINITY))
            }
        })
        .collect();
    for row in &model.lp.constraints.rows {
        let terms: Vec<(Variable, f64)> = row.terms.iter().map(|&(j, c)| (vars[j], c)).collect();
        p.add_constraint(terms.as_slice(), op(row.sense), row.rhs);
    }
    match p.solve() {
        Ok(o) => o
            .into_solution()
            .map(|s| Some(s.objective()))
            .map_err(|_| MilpError::Lp("interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(MilpError::Lp(e.to_string())),
    }
}
