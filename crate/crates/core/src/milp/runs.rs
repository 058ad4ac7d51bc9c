//! Run formulation of the comfort rows, used inside branch-and-bound. Each
//! admissible reduction action `[a, b]` of a user becomes a column; the
//! activation `s_t` equals the number of chosen runs covering `t`, runs
//! extended by their trailing gap `[a, b + delta + 1]` may not overlap, and
//! at most `eta` runs are chosen. Binary solutions correspond one to one
//! with activation patterns meeting the comfort rows, and the relaxation
//! is the convex hull of each user's patterns when `eta` is unlimited.

use std::collections::HashMap;

use super::model::MilpModel;
use super::reduced::{ColKind, Component, Reduced};
use crate::lp::{Row, RowTag, Sense, VarKey};

/// Activation and run columns of one user inside a component.
#[derive(Clone, Debug, Default)]
pub(crate) struct RunUser {
    /// `(t, column)` of the free activations, ascending in `t`.
    pub s: Vec<(usize, usize)>,
    pub run_col: HashMap<(usize, usize), usize>,
}

impl RunUser {
    /// Sets the run columns to the maximal runs of the activations in `x`.
    pub fn complete(&self, x: &mut [f64]) {
        for &c in self.run_col.values() {
            x[c] = 0.0;
        }
        let mut i = 0;
        while i < self.s.len() {
            if x[self.s[i].1] < 0.5 {
                i += 1;
                continue;
            }
            let a = self.s[i].0;
            let mut b = a;
            i += 1;
            while i < self.s.len() && self.s[i].0 == b + 1 && x[self.s[i].1] >= 0.5 {
                b += 1;
                i += 1;
            }
            if let Some(&c) = self.run_col.get(&(a, b)) {
                x[c] = 1.0;
            }
        }
    }
}

/// A component rewritten in the run formulation.
pub(crate) struct Extended {
    pub comp: Component,
    /// Registry index of each activation column (the leading columns).
    pub s_bin: Vec<usize>,
    pub names: Vec<String>,
}

fn is_limit(tag: &RowTag) -> bool {
    matches!(
        tag,
        RowTag::VoltageMin { .. } | RowTag::VoltageMax { .. } | RowTag::Thermal { .. }
    )
}

/// Rewrites `comp` (a block of `red`) in the run formulation. Only the
/// activations left free by `red` may be covered by runs; runs start and
/// end at steps where activation relieves a limit row, which loses no
/// optimal schedule.
pub(crate) fn extend(comp: &Component, red: &Reduced, model: &MilpModel) -> Extended {
    let keys = model.lp.vars.keys();
    let horizon = model.horizon();
    let mut local = vec![usize::MAX; comp.cols.len()];
    let mut s_bin = Vec::new();
    let mut names = Vec::new();
    let mut per_user: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (c, kind) in comp.kinds.iter().enumerate() {
        if let ColKind::S = kind {
            let bin = red.col_bin[comp.cols[c]];
            let VarKey::S { user, t } = keys[bin] else {
                unreachable!("activation column");
            };
            local[c] = s_bin.len();
            per_user.entry(user).or_default().push((t, s_bin.len()));
            s_bin.push(bin);
            names.push(keys[bin].to_string());
        }
    }
    let n_s = s_bin.len();
    let mut rows: Vec<Row> = comp
        .rows
        .iter()
        .filter(|r| is_limit(&r.tag))
        .map(|r| Row {
            tag: r.tag,
            terms: r.terms.iter().map(|&(j, c)| (local[j], c)).collect(),
            sense: r.sense,
            rhs: r.rhs,
        })
        .collect();
    let mut helpful = vec![false; n_s];
    for r in &rows {
        for &(j, c) in &r.terms {
            if c < 0.0 {
                helpful[j] = true;
            }
        }
    }

    let mut kinds = vec![ColKind::S; n_s];
    let mut runs = Vec::new();
    let mut users: Vec<usize> = per_user.keys().copied().collect();
    users.sort_unstable();
    for user in users {
        let contract = &model.contracts[user];
        if !contract.has_comfort_rows() {
            continue;
        }
        let mut slots = per_user.remove(&user).expect("user slots");
        slots.sort_unstable();
        let alpha = contract.alpha_steps.map_or(usize::MAX, |a| a as usize);
        let mut ru = RunUser {
            s: slots.clone(),
            run_col: HashMap::new(),
        };
        let mut spans: Vec<(usize, usize, usize)> = Vec::new();
        for i in 0..slots.len() {
            let (a, ca) = slots[i];
            if !helpful[ca] {
                continue;
            }
            let mut k = i;
            while k < slots.len() && slots[k].0 == a + (k - i) && k - i < alpha {
                let (b, cb) = slots[k];
                if helpful[cb] {
                    let col = kinds.len() + spans.len();
                    spans.push((a, b, col));
                }
                k += 1;
            }
        }
        let d = contract.delta_steps as usize;
        for &(a, b, col) in &spans {
            ru.run_col.insert((a, b), col);
            names.push(format!("run_{user}_{a}_{b}"));
            kinds.push(ColKind::Run);
        }
        for &(t, cs) in &slots {
            let mut terms = vec![(cs, 1.0)];
            terms.extend(spans.iter().filter(|s| s.0 <= t && t <= s.1).map(|s| (s.2, -1.0)));
            rows.push(Row {
                tag: RowTag::RunLink { user, t },
                terms,
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
        if let (Some(first), Some(last)) = (spans.iter().map(|s| s.0).min(), spans.iter().map(|s| s.1).max()) {
            for t in first..=(last + d + 1).min(horizon - 1) {
                let terms: Vec<(usize, f64)> = spans
                    .iter()
                    .filter(|s| s.0 <= t && t <= s.1 + d + 1)
                    .map(|s| (s.2, 1.0))
                    .collect();
                if terms.len() > 1 {
                    rows.push(Row {
                        tag: RowTag::RunPacking { user, t },
                        terms,
                        sense: Sense::Le,
                        rhs: 1.0,
                    });
                }
            }
        }
        if let Some(eta) = contract.eta {
            if spans.len() > eta as usize {
                rows.push(Row {
                    tag: RowTag::RunCount { user },
                    terms: spans.iter().map(|s| (s.2, 1.0)).collect(),
                    sense: Sense::Le,
                    rhs: eta as f64,
                });
            }
        }
        runs.push(ru);
    }
    let n = kinds.len();
    let mut obj = vec![0.0; n];
    obj[..n_s].iter_mut().for_each(|o| *o = 1.0);
    Extended {
        comp: Component {
            cols: (0..n).collect(),
            kinds,
            obj,
            rows,
            runs,
        },
        s_bin,
        names,
    }
}
