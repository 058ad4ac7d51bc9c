use std::fmt;

use serde::{Deserialize, Serialize};

use super::contract::Contract;
use crate::demand::Demand;

/// Reduction schedule: `s[user][t] = 1` caps the user at the guaranteed
/// power; `y` and `z` mark activations and deactivations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub s: Vec<Vec<u8>>,
    pub y: Vec<Vec<u8>>,
    pub z: Vec<Vec<u8>>,
    /// Demand realised under the schedule, p.u.
    pub demand: Demand,
    /// Number of active user-timesteps.
    pub objective: u64,
}

/// Activation and deactivation indicators implied by `s`, assuming no
/// reduction is active before the horizon.
pub fn canonical_transitions(s: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut prev = 0u8;
    let mut y = Vec::with_capacity(s.len());
    let mut z = Vec::with_capacity(s.len());
    for &v in s {
        y.push(u8::from(v > prev));
        z.push(u8::from(v < prev));
        prev = v;
    }
    (y, z)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComfortViolation {
    /// Array sizes do not match the contracts and horizon.
    Shape { user: Option<usize> },
    /// Entry outside {0, 1}.
    NonBinary { user: usize, t: usize },
    /// `s_t - s_{t-1} != y_t - z_t`, or a deactivation at `t = 0`.
    Identity { user: usize, t: usize },
    /// Activation and deactivation at the same step.
    Simultaneous { user: usize, t: usize },
    /// More activations than allowed.
    Activations { user: usize, count: u32, limit: u32 },
    /// The window ending at `t` holds more active steps than allowed.
    Duration { user: usize, t: usize },
    /// Reduction active at `t` too soon after a deactivation, or two
    /// deactivations inside one gap window.
    Gap { user: usize, t: usize },
}

impl fmt::Display for ComfortViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ComfortViolation::Shape { user: Some(u) } => write!(f, "user {u}: wrong array length"),
            ComfortViolation::Shape { user: None } => write!(f, "wrong number of users"),
            ComfortViolation::NonBinary { user, t } => write!(f, "user {user} t={t}: non-binary value"),
            ComfortViolation::Identity { user, t } => write!(f, "user {user} t={t}: transition identity"),
            ComfortViolation::Simultaneous { user, t } => {
                write!(f, "user {user} t={t}: activation and deactivation together")
            }
            ComfortViolation::Activations { user, count, limit } => {
                write!(f, "user {user}: {count} activations exceed {limit}")
            }
            ComfortViolation::Duration { user, t } => write!(f, "user {user} t={t}: duration"),
            ComfortViolation::Gap { user, t } => write!(f, "user {user} t={t}: minimum gap"),
        }
    }
}

/// Re-checks the comfort rows and the transition identity of `schedule`.
/// Users whose contract has no transition variables are checked against
/// the activation pattern of `s` alone.
pub fn verify_schedule(schedule: &Schedule, contracts: &[Contract], horizon: usize) -> Vec<ComfortViolation> {
    let mut out = Vec::new();
    let n = contracts.len();
    if schedule.s.len() != n || schedule.y.len() != n || schedule.z.len() != n {
        out.push(ComfortViolation::Shape { user: None });
        return out;
    }
    for (user, c) in contracts.iter().enumerate() {
        let (s, y, z) = (&schedule.s[user], &schedule.y[user], &schedule.z[user]);
        if s.len() != horizon || y.len() != horizon || z.len() != horizon {
            out.push(ComfortViolation::Shape { user: Some(user) });
            continue;
        }
        let mut binary = true;
        for t in 0..horizon {
            if s[t] > 1 || y[t] > 1 || z[t] > 1 {
                out.push(ComfortViolation::NonBinary { user, t });
                binary = false;
            }
        }
        if !binary {
            continue;
        }
        let (y, z) = if c.needs_transitions() {
            for t in 0..horizon {
                let prev = if t == 0 { 0 } else { s[t - 1] as i32 };
                let ds = s[t] as i32 - prev;
                if ds != y[t] as i32 - z[t] as i32 || (t == 0 && z[t] == 1) {
                    out.push(ComfortViolation::Identity { user, t });
                }
                if y[t] == 1 && z[t] == 1 {
                    out.push(ComfortViolation::Simultaneous { user, t });
                }
            }
            (y.clone(), z.clone())
        } else {
            canonical_transitions(s)
        };
        if let Some(eta) = c.eta {
            let count = y.iter().map(|&v| v as u32).sum::<u32>();
            if count > eta {
                out.push(ComfortViolation::Activations {
                    user,
                    count,
                    limit: eta,
                });
            }
        }
        if let Some(alpha) = c.alpha_steps {
            let a = alpha as usize;
            for t in a..horizon {
                let sum: usize = s[t - a..=t].iter().map(|&v| v as usize).sum();
                if sum > a {
                    out.push(ComfortViolation::Duration { user, t });
                }
            }
        }
        if c.needs_transitions() {
            let d = c.delta_steps as usize;
            for t in 0..horizon {
                let sum: usize = z[t.saturating_sub(d)..=t].iter().map(|&v| v as usize).sum();
                if sum + s[t] as usize > 1 {
                    out.push(ComfortViolation::Gap { user, t });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::contract::{preset_by_name, Contract};

    fn contract(eta: Option<u32>, alpha: Option<u32>, delta: u32) -> Contract {
        let mut c = Contract::new("u", 1.0, &preset_by_name("simple", 15).unwrap());
        c.eta = eta;
        c.alpha_steps = alpha;
        c.delta_steps = delta;
        c
    }

    fn sched(s: Vec<u8>) -> Schedule {
        let (y, z) = canonical_transitions(&s);
        let h = s.len();
        Schedule {
            objective: s.iter().map(|&v| v as u64).sum(),
            s: vec![s],
            y: vec![y],
            z: vec![z],
            demand: Demand::zeros(1, h),
        }
    }

    #[test]
    fn canonical() {
        let (y, z) = canonical_transitions(&[1, 1, 0, 1, 0]);
        assert_eq!(y, vec![1, 0, 0, 1, 0]);
        assert_eq!(z, vec![0, 0, 1, 0, 1]);
    }

    #[test]
    fn duration_violation_at_last_step() {
        let v = verify_schedule(&sched(vec![1, 1, 1]), &[contract(None, Some(2), 0)], 3);
        assert_eq!(v, vec![ComfortViolation::Duration { user: 0, t: 2 }]);
        assert!(verify_schedule(&sched(vec![1, 1, 0, 1]), &[contract(None, Some(2), 0)], 4).is_empty());
    }

    #[test]
    fn activation_limit() {
        let v = verify_schedule(&sched(vec![1, 0, 0, 1]), &[contract(Some(1), None, 0)], 4);
        assert_eq!(
            v,
            vec![ComfortViolation::Activations {
                user: 0,
                count: 2,
                limit: 1
            }]
        );
    }

    #[test]
    fn gap_window() {
        let c = [contract(None, None, 2)];
        // deactivation at t=3 blocks t=3..=5
        assert!(!verify_schedule(&sched(vec![0, 1, 1, 0, 0, 1, 1]), &c, 7).is_empty());
        assert!(verify_schedule(&sched(vec![0, 1, 1, 0, 0, 0, 1]), &c, 7).is_empty());
    }

    #[test]
    fn simultaneous_flagged() {
        let mut s = sched(vec![1, 1, 1]);
        s.y[0][1] = 1;
        s.z[0][1] = 1;
        let v = verify_schedule(&s, &[contract(Some(3), None, 0)], 3);
        assert!(v.contains(&ComfortViolation::Simultaneous { user: 0, t: 1 }));
    }

    #[test]
    fn identity_and_shape() {
        let mut s = sched(vec![0, 1, 1]);
        s.y[0][1] = 0;
        let v = verify_schedule(&s, &[contract(Some(3), None, 0)], 3);
        assert!(v.contains(&ComfortViolation::Identity { user: 0, t: 1 }));
        assert_eq!(
            verify_schedule(&s, &[contract(Some(3), None, 0)], 4),
            vec![ComfortViolation::Shape { user: Some(0) }]
        );
    }
}
