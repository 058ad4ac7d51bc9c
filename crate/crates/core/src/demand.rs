use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::net::Phase;

/// Complex power demand per (user, phase, timestep) in per unit. Positive
/// real part means consumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    n_users: usize,
    horizon: usize,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Demand {
    pub fn zeros(n_users: usize, horizon: usize) -> Self {
        Demand {
            n_users,
            horizon,
            p: vec![0.0; n_users * 3 * horizon],
            q: vec![0.0; n_users * 3 * horizon],
        }
    }

    fn idx(&self, user: usize, phase: Phase, t: usize) -> usize {
        debug_assert!(user < self.n_users && t < self.horizon);
        (user * 3 + phase.index()) * self.horizon + t
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, user: usize, phase: Phase, t: usize) -> Complex64 {
        let i = self.idx(user, phase, t);
        Complex64::new(self.p[i], self.q[i])
    }

    pub fn set(&mut self, user: usize, phase: Phase, t: usize, s: Complex64) {
        let i = self.idx(user, phase, t);
        self.p[i] = s.re;
        self.q[i] = s.im;
    }

    /// Per-user phase triples at one timestep.
    pub fn at(&self, t: usize) -> Vec<[Complex64; 3]> {
        (0..self.n_users)
            .map(|u| Phase::ALL.map(|p| self.get(u, p, t)))
            .collect()
    }

    pub fn scaled(&self, k: f64) -> Demand {
        Demand {
            n_users: self.n_users,
            horizon: self.horizon,
            p: self.p.iter().map(|v| v * k).collect(),
            q: self.q.iter().map(|v| v * k).collect(),
        }
    }
}
