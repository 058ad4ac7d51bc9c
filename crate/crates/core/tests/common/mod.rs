#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lvflex::demand::Demand;
use lvflex::linpf::{lin_pf_step, Limits};
use lvflex::milp::{default_q, preset_modalities, Contract, ModalityPreset};
use lvflex::net::{FeederBuilder, Network, Phase, PhaseSet};

/// A small random scheduling instance with congested limits.
pub struct SmallInstance {
    pub net: Network,
    pub demand: Demand,
    pub limits: Limits,
    pub contracts: Vec<Contract>,
    pub modality: ModalityPreset,
}

fn phases(rng: &mut ChaCha8Rng) -> PhaseSet {
    if rng.random_bool(0.3) {
        PhaseSet::ABC
    } else {
        PhaseSet::single(Phase::ALL[rng.random_range(0..3)])
    }
}

/// Instance `seed` with at most `max_users` users and `max_steps` steps,
/// using preset `preset` (index into the five presets). Hourly steps make
/// the comfort limits bind on short horizons.
pub fn small_instance(seed: u64, preset: usize, max_users: usize, max_steps: usize) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_users);
    let horizon = rng.random_range(1..=max_steps);
    let step = if rng.random_bool(0.8) { 60 } else { 30 };
    let mut b = FeederBuilder::new(230.0, 100_000.0).source("s").line(
        "s",
        "a",
        PhaseSet::ABC,
        Complex64::new(rng.random_range(0.01..0.05), rng.random_range(0.002..0.01)),
        1.0,
    );
    for u in 0..n {
        let ph = phases(&mut rng);
        let bus = format!("b{u}");
        b = b
            .line(
                "a",
                &bus,
                ph,
                Complex64::new(rng.random_range(0.02..0.1), rng.random_range(0.001..0.005)),
                1.0,
            )
            .user(&format!("u{u}"), &bus, ph);
    }
    let mut feeder = b.build();
    let gtd_kw: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.5)).collect();
    let mut demand = Demand::zeros(n, horizon);
    for (u, att) in feeder.users.iter().enumerate() {
        let k = att.phases.len() as f64;
        for t in 0..horizon {
            let p = rng.random_range(0.5..9.0);
            for ph in att.phases.iter() {
                demand.set(u, ph, t, Complex64::new(p, default_q(p)) / (k * 100.0));
            }
        }
    }
    let modality = preset_modalities(step).unwrap()[preset].clone();
    let contracts: Vec<Contract> = (0..n)
        .map(|u| Contract::new(&format!("u{u}"), gtd_kw[u], &modality))
        .collect();

    // limits between the all-guaranteed state and the forecast peak
    let net0 = Network::new(feeder.clone()).unwrap();
    let gtd: Vec<[Complex64; 3]> = feeder
        .users
        .iter()
        .enumerate()
        .map(|(u, att)| {
            let k = att.phases.len() as f64;
            let mut s = [Complex64::new(0.0, 0.0); 3];
            for ph in att.phases.iter() {
                s[ph.index()] = Complex64::new(gtd_kw[u], default_q(gtd_kw[u])) / (k * 100.0);
            }
            s
        })
        .collect();
    let low = lin_pf_step(&net0, &gtd);
    let peaks: Vec<_> = (0..horizon).map(|t| lin_pf_step(&net0, &demand.at(t))).collect();
    let mut limits = Limits::from_network(&net0, horizon);
    let mode = rng.random_range(0..3);
    for i in 0..feeder.buses.len() {
        if feeder.buses[i].is_source {
            continue;
        }
        let ph = net0.energized(i);
        let vmin = |u: &[[f64; 3]]| ph.iter().map(|p| u[i][p.index()].sqrt()).fold(f64::INFINITY, f64::min);
        let hi = vmin(&low.u);
        let lo = peaks.iter().map(|s| vmin(&s.u)).fold(f64::INFINITY, f64::min);
        limits.vmin[i] = if mode != 1 {
            lo + rng.random_range(0.0..1.15) * (hi - lo)
        } else {
            0.5
        };
    }
    for k in 0..feeder.branches.len() {
        let ph = net0.branch(k).phases;
        let flow = |l: &[[Complex64; 3]]| ph.iter().map(|p| l[k][p.index()].norm()).fold(0.0, f64::max);
        let lo = flow(&low.lambda);
        let hi = peaks.iter().map(|s| flow(&s.lambda)).fold(0.0, f64::max);
        limits.s_rated[k] = if mode != 0 {
            lo + rng.random_range(0.0..1.15) * (hi - lo).max(1e-6) + 1e-6
        } else {
            10.0
        };
    }
    for (b, l) in feeder.branches.iter_mut().zip(&limits.s_rated) {
        b.s_rated_pu = *l;
    }
    SmallInstance {
        net: Network::new(feeder).unwrap(),
        demand,
        limits,
        contracts,
        modality,
    }
}
