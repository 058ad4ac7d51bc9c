use num_complex::Complex64;
use rand::Rng;

use super::{rng, ScenarioParams, SynthError, STREAM_FEEDER};
use crate::net::{
    validate_feeder, Branch, Bus, Feeder, Phase, PhaseMatrix, PhaseSet, UserAttachment, DEFAULT_VMAX_PU,
    DEFAULT_VMIN_PU,
};

pub const SOURCE_BUS: &str = "src";

fn bus(id: String, phases: PhaseSet, is_source: bool) -> Bus {
    Bus {
        id,
        phases,
        vmin_pu: DEFAULT_VMIN_PU,
        vmax_pu: DEFAULT_VMAX_PU,
        is_source,
    }
}

/// Per-phase impedance matrix of a cable in p.u.: `z_self` on the diagonal
/// and `mutual * z_self` between phases.
fn cable(phases: PhaseSet, z_self: Complex64, mutual: f64) -> PhaseMatrix {
    let mut m = PhaseMatrix::diagonal(phases, z_self);
    for p in phases.iter() {
        for q in phases.iter() {
            if p != q {
                m.set(p, q, z_self * mutual);
            }
        }
    }
    m
}

/// Radial feeder: a three-phase trunk from the source with one service
/// cable per user. Trunk nodes mostly extend the previous node and
/// occasionally branch off an earlier one; each hosts one to three users.
pub fn generate_feeder(params: &ScenarioParams) -> Result<Feeder, SynthError> {
    params.validate()?;
    let mut rng = rng(params.seed, STREAM_FEEDER);
    let zb = params.base_voltage_v * params.base_voltage_v / params.base_power_va;
    let rating = |amps: f64| amps * params.base_voltage_v / params.base_power_va;
    let z = |r: f64, x: f64, m: f64| Complex64::new(r, x) * (m / 1000.0) / zb;

    // users per trunk node
    let mut slots = Vec::new();
    let mut left = params.n_users;
    while left > 0 {
        let k = rng.random_range(1..=3).min(left);
        slots.push(k);
        left -= k;
    }

    let mut buses = vec![bus(SOURCE_BUS.into(), PhaseSet::ABC, true)];
    let mut branches = Vec::new();
    let mut users = Vec::new();
    let trunk_id = |i: usize| format!("n{:03}", i + 1);
    for i in 0..slots.len() {
        let parent = if i == 0 {
            SOURCE_BUS.to_string()
        } else if rng.random_bool(params.branching) {
            trunk_id(rng.random_range(0..i))
        } else {
            trunk_id(i - 1)
        };
        let len = rng.random_range(params.trunk_min_m..=params.trunk_max_m);
        buses.push(bus(trunk_id(i), PhaseSet::ABC, false));
        branches.push(Branch {
            from: parent,
            to: trunk_id(i),
            phases: PhaseSet::ABC,
            z: cable(
                PhaseSet::ABC,
                z(params.trunk_r_ohm_km, params.trunk_x_ohm_km, len),
                params.mutual_ratio,
            ),
            s_rated_pu: rating(params.trunk_ampacity),
        });
    }
    let mut u = 0;
    for (i, &k) in slots.iter().enumerate() {
        for _ in 0..k {
            let phases = if rng.random_bool(params.three_phase_share) {
                PhaseSet::ABC
            } else {
                PhaseSet::single(Phase::ALL[rng.random_range(0..3)])
            };
            let len = rng.random_range(params.service_min_m..=params.service_max_m);
            let id = format!("h{:03}", u + 1);
            buses.push(bus(id.clone(), phases, false));
            branches.push(Branch {
                from: trunk_id(i),
                to: id.clone(),
                phases,
                z: cable(
                    phases,
                    z(params.service_r_ohm_km, params.service_x_ohm_km, len),
                    params.mutual_ratio,
                ),
                s_rated_pu: rating(params.service_ampacity),
            });
            users.push(UserAttachment {
                user_id: format!("u{:03}", u + 1),
                bus_id: id,
                phases,
            });
            u += 1;
        }
    }
    let feeder = Feeder {
        buses,
        branches,
        users,
        base_voltage_v: params.base_voltage_v,
        base_power_va: params.base_power_va,
    };
    let report = validate_feeder(&feeder);
    if !report.is_empty() {
        return Err(SynthError::Params(format!(
            "generated feeder is invalid: {:?}",
            report.issues
        )));
    }
    Ok(feeder)
}

/// Cable upgrade: impedances scaled by `z_factor`, ratings divided by it.
pub fn reinforce(feeder: &Feeder, z_factor: f64) -> Feeder {
    let mut f = feeder.clone();
    for b in &mut f.branches {
        b.z = b.z.scale(z_factor);
        b.s_rated_pu /= z_factor;
    }
    f
}
