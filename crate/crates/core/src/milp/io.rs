use super::model::MilpModel;
use super::schedule::Schedule;
use super::MilpError;
use crate::lp::{parse_assignment, write_lp_format, VarKey};

/// The model in CPLEX LP text format.
pub fn export_lp(model: &MilpModel) -> String {
    write_lp_format(&model.lp)
}

/// Schedule from an external solver's variable listing (`name value` per
/// line). Binaries not listed are zero; values must be within 1e-6 of 0 or 1.
pub fn import_solution(model: &MilpModel, text: &str) -> Result<Schedule, MilpError> {
    let values = parse_assignment(text, &model.lp.vars).map_err(MilpError::Import)?;
    let (n, h) = (model.n_users(), model.horizon());
    let mut s = vec![vec![0u8; h]; n];
    let mut y = vec![vec![0u8; h]; n];
    let mut z = vec![vec![0u8; h]; n];
    for (i, v) in values {
        if i >= model.beta {
            continue;
        }
        let b = v.round();
        if (v - b).abs() > 1e-6 || !(0.0..=1.0).contains(&b) {
            return Err(MilpError::Import(format!(
                "{} = {v} is not binary",
                model.lp.vars.key(i)
            )));
        }
        let b = b as u8;
        match model.lp.vars.key(i) {
            VarKey::S { user, t } => s[user][t] = b,
            VarKey::Y { user, t } => y[user][t] = b,
            VarKey::Z { user, t } => z[user][t] = b,
            _ => unreachable!("binaries come first"),
        }
    }
    let demand = model.realized_demand(&s);
    let objective = s.iter().flatten().map(|&v| v as u64).sum();
    Ok(Schedule {
        s,
        y,
        z,
        demand,
        objective,
    })
}
