use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{rng, EvPhasePolicy, ProfileSet, ScenarioParams, SynthError, STREAM_EV};
use crate::net::{Feeder, Phase};

/// One EV charging block: constant power on one phase over
/// `start..start + steps`, clipped at the horizon end. Starts past the
/// horizon are moved to its last step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvSession {
    pub user: usize,
    pub phase: Phase,
    pub start: usize,
    pub steps: usize,
}

/// Draws the sessions for `feeder`: exactly `round(ev_share * n_users)`
/// owners, start times from a two-component normal mixture, durations
/// uniform in the configured range.
pub fn draw_ev_sessions(feeder: &Feeder, params: &ScenarioParams) -> Result<Vec<EvSession>, SynthError> {
    params.validate()?;
    let n = feeder.users.len();
    let mut rng = rng(params.seed, STREAM_EV);
    let owners = (params.ev_share * n as f64).round() as usize;
    let mut chosen = sample(&mut rng, n, owners.min(n)).into_vec();
    chosen.sort_unstable();
    let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| SynthError::Params(e.to_string()));
    let main = normal(params.ev_start_mean_h, params.ev_start_sd_h)?;
    let late = normal(params.ev_late_mean_h, params.ev_late_sd_h)?;
    let step_h = params.step_minutes as f64 / 60.0;
    let mut round_robin = 0;
    let mut out = Vec::with_capacity(chosen.len());
    for user in chosen {
        let att = &feeder.users[user];
        let phase = if att.phases.len() == 1 {
            att.phases.iter().next().expect("one phase")
        } else {
            let pick = match params.ev_phase_policy {
                EvPhasePolicy::Attachment => rng.random_range(0..3),
                EvPhasePolicy::RoundRobin => {
                    round_robin += 1;
                    (round_robin - 1) % 3
                }
            };
            let phases: Vec<Phase> = att.phases.iter().collect();
            phases[pick % phases.len()]
        };
        let start_h = if rng.random_bool(params.ev_late_weight) {
            late.sample(&mut rng)
        } else {
            main.sample(&mut rng)
        };
        let duration_h = rng.random_range(params.ev_min_duration_h..=params.ev_max_duration_h);
        let last = params.horizon - 1;
        let start = ((start_h.max(0.0) / step_h).round() as usize).min(last);
        let steps = ((duration_h / step_h).round() as usize).max(1);
        out.push(EvSession {
            user,
            phase,
            start,
            steps,
        });
    }
    Ok(out)
}

/// `profiles` with EV charging added on top; the baseline is untouched.
pub fn attach_ev_sessions(
    profiles: &ProfileSet,
    feeder: &Feeder,
    params: &ScenarioParams,
) -> Result<ProfileSet, SynthError> {
    if profiles.n_users() != feeder.users.len() || profiles.horizon != params.horizon {
        return Err(SynthError::Profile(
            "profiles do not match the feeder and horizon".into(),
        ));
    }
    let mut out = profiles.clone();
    let p = params.ev_power_kva * params.power_factor;
    let q = p * params.q_ratio();
    for s in draw_ev_sessions(feeder, params)? {
        for t in s.start..(s.start + s.steps).min(params.horizon) {
            out.add(s.user, s.phase, t, p, q);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_baseline_profiles, generate_feeder};

    fn setup(n: usize, share: f64) -> (Feeder, ProfileSet, ScenarioParams) {
        let p = ScenarioParams {
            n_users: n,
            ev_share: share,
            ..Default::default()
        };
        let f = generate_feeder(&p).unwrap();
        let b = generate_baseline_profiles(&f, &p).unwrap();
        (f, b, p)
    }

    #[test]
    fn exact_owner_count() {
        let (f, b, p) = setup(100, 0.3);
        let e = attach_ev_sessions(&b, &f, &p).unwrap();
        let modified = (0..100)
            .filter(|&u| {
                f.users[u]
                    .phases
                    .iter()
                    .any(|ph| (0..96).any(|t| e.p(u, ph, t) != b.p(u, ph, t)))
            })
            .count();
        assert_eq!(modified, 30);
    }

    #[test]
    fn single_phase_increment() {
        let (f, b, p) = setup(20, 1.0);
        let e = attach_ev_sessions(&b, &f, &p).unwrap();
        for s in draw_ev_sessions(&f, &p).unwrap() {
            if f.users[s.user].phases.len() == 1 && s.start < 96 {
                let d = e.p(s.user, s.phase, s.start) - b.p(s.user, s.phase, s.start);
                assert!((d - 3.3 * 0.95).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn never_decreases_and_zero_share_identity() {
        let (f, b, p) = setup(25, 0.5);
        let e = attach_ev_sessions(&b, &f, &p).unwrap();
        for u in 0..25 {
            for ph in f.users[u].phases.iter() {
                for t in 0..96 {
                    assert!(e.p(u, ph, t) >= b.p(u, ph, t) && e.q(u, ph, t) >= b.q(u, ph, t));
                }
            }
        }
        let (f, b, p) = setup(25, 0.0);
        assert_eq!(attach_ev_sessions(&b, &f, &p).unwrap(), b);
    }

    #[test]
    fn share_out_of_range() {
        let (f, b, mut p) = setup(5, 0.3);
        p.ev_share = 1.5;
        assert!(attach_ev_sessions(&b, &f, &p).is_err());
    }
}
