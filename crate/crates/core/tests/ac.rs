mod common;

use num_complex::Complex64;

use lvflex::ac::{
    default_delta_grid, detect_congestion, kirchhoff_mismatch, lin_vs_ac_gap, solve_ac_pf, solve_ac_step,
    source_phasor, tighten_and_resolve, AcError, AcOptions, AcPfSolution, AcStep, MilpStatus,
};
use lvflex::demand::Demand;
use lvflex::linpf::{evaluate_lin_pf, Limits, ThermalPolygon};
use lvflex::milp::{preset_by_name, Contract, SolveOptions};
use lvflex::net::{FeederBuilder, Network, Phase, PhaseSet};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn two_bus(r: f64, x: f64, rating: f64) -> Network {
    let f = FeederBuilder::new(230.0, 10_000.0)
        .source("s")
        .line("s", "b", PhaseSet::single(Phase::A), Complex64::new(r, x), rating)
        .user("u", "b", PhaseSet::single(Phase::A))
        .build();
    Network::new(f).unwrap()
}

/// Source, three-phase trunk bus, then a chain of `n` three-phase buses,
/// each with one three-phase user.
fn chain(n: usize) -> Network {
    let mut b = FeederBuilder::new(400.0, 100_000.0).source("s");
    let mut prev = "s".to_string();
    for i in 0..n {
        let bus = format!("b{i}");
        b = b
            .line(&prev, &bus, PhaseSet::ABC, Complex64::new(0.02, 0.01), 1.0)
            .user(&format!("u{i}"), &bus, PhaseSet::ABC);
        prev = bus;
    }
    Network::new(b.build()).unwrap()
}

fn balanced(net: &Network, horizon: usize, s: Complex64) -> Demand {
    let mut d = Demand::zeros(net.n_users(), horizon);
    for u in 0..net.n_users() {
        for t in 0..horizon {
            for p in net.user(u).phases.iter() {
                d.set(u, p, t, s);
            }
        }
    }
    d
}

#[test]
fn zero_injection_keeps_source_phasors() {
    let net = chain(3);
    let d = Demand::zeros(net.n_users(), 2);
    let sol = solve_ac_pf(&net, &d, AcOptions::default()).unwrap();
    assert!(sol.converged);
    for t in 0..2 {
        for bus in 0..net.n_buses() {
            for p in Phase::ALL {
                assert!((sol.v(bus, p, t) - source_phasor(p)).norm() < 1e-12);
            }
        }
        for k in 0..net.n_branches() {
            for p in Phase::ALL {
                assert_eq!(sol.s_flow(k, p, t), ZERO);
            }
        }
    }
}

#[test]
fn two_bus_closed_form() {
    let net = two_bus(0.1, 0.0, 5.0);
    let mut d = Demand::zeros(1, 1);
    d.set(0, Phase::A, 0, Complex64::new(0.1, 0.0));
    let sol = solve_ac_pf(&net, &d, AcOptions::default()).unwrap();
    let v = sol.v(1, Phase::A, 0).norm();
    assert!((v - (1.0 + 0.96f64.sqrt()) / 2.0).abs() < 1e-9);
    assert!((v - 0.98990).abs() < 5e-6);
    assert!(sol.max_mismatch <= 1e-8);
}

#[test]
fn balanced_load_is_symmetric() {
    let net = chain(2);
    let d = balanced(&net, 1, Complex64::new(0.05, 0.02));
    let sol = solve_ac_pf(&net, &d, AcOptions::default()).unwrap();
    for bus in 1..net.n_buses() {
        let va = sol.v(bus, Phase::A, 0);
        let r = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0);
        assert!((sol.v(bus, Phase::B, 0) - va * r).norm() < 1e-10);
        assert!((sol.v(bus, Phase::C, 0) - va * r * r).norm() < 1e-10);
        assert!(va.norm() < 1.0);
    }
}

#[test]
fn kirchhoff_and_losses_hold_at_convergence() {
    let net = chain(4);
    let d = balanced(&net, 1, Complex64::new(0.08, 0.03));
    let sol = solve_ac_pf(&net, &d, AcOptions::default()).unwrap();
    let step = &sol.steps[0];
    assert!(kirchhoff_mismatch(&net, &d.at(0), step) <= 1e-8);
    for k in 0..net.n_branches() {
        let to = net.branch_down[k];
        for p in net.branch(k).phases.iter() {
            let recv = step.v[to][p.index()] * step.i[k][p.index()].conj();
            let sent = step.s_flow[k][p.index()];
            assert!(sent.re >= recv.re - 1e-12, "negative loss on branch {k}");
            assert!(sent.norm() >= recv.norm() - 1e-12);
        }
    }
}

#[test]
fn non_convergence_and_collapse_are_reported() {
    let net = two_bus(0.1, 0.05, 5.0);
    let mut d = Demand::zeros(1, 1);
    d.set(0, Phase::A, 0, Complex64::new(0.5, 0.1));
    let opts = AcOptions { tol: 1e-8, max_iter: 1 };
    assert!(matches!(
        solve_ac_pf(&net, &d, opts),
        Err(AcError::NonConvergence { t: Some(0), .. })
    ));

    d.set(0, Phase::A, 0, Complex64::new(5.0, 1.0));
    assert!(matches!(
        solve_ac_step(&net, &d.at(0), AcOptions::default()),
        Err(AcError::Collapse { .. })
    ));
}

#[test]
fn demand_size_is_checked() {
    let net = chain(2);
    let d = Demand::zeros(3, 1);
    assert!(matches!(
        solve_ac_pf(&net, &d, AcOptions::default()),
        Err(AcError::Dimension(_))
    ));
}

/// One-step solution of the two-bus feeder with phase A at `v` and
/// branch flow `s`.
fn hand_solution(v: f64, s: f64) -> AcPfSolution {
    let mut step = AcStep {
        v: vec![[ZERO; 3]; 2],
        i: vec![[ZERO; 3]],
        s_flow: vec![[ZERO; 3]],
        iterations: 1,
        mismatch: 0.0,
    };
    for p in Phase::ALL {
        step.v[0][p.index()] = source_phasor(p);
    }
    step.v[1][0] = Complex64::new(v, 0.0);
    step.s_flow[0][0] = Complex64::new(s, 0.0);
    AcPfSolution {
        steps: vec![step],
        converged: true,
        max_mismatch: 0.0,
    }
}

#[test]
fn congestion_events_carry_signed_margins() {
    let net = two_bus(0.1, 0.0, 0.2);
    let limits = Limits::from_network(&net, 1);
    assert_eq!(limits.vmin[1], 0.9);

    let r = detect_congestion(&net, &hand_solution(0.89, 0.1), &limits).unwrap();
    assert_eq!(r.undervoltage.len(), 1);
    assert!((r.undervoltage[0].margin + 0.01).abs() < 1e-12);
    assert!(r.overcurrent.is_empty() && r.overvoltage.is_empty());

    let r = detect_congestion(&net, &hand_solution(0.95, 0.1), &limits).unwrap();
    assert!(r.is_empty());
    assert!(r.worst_voltage_headroom > 0.0 && r.worst_thermal_headroom > 0.0);

    let r = detect_congestion(&net, &hand_solution(0.95, 1.05 * 0.2), &limits).unwrap();
    assert_eq!(r.overcurrent.len(), 1);
    assert!((r.overcurrent[0].margin - 0.05 * 0.2).abs() < 1e-12);
    assert!(!r.has_voltage_events());
}

#[test]
fn congestion_rejects_bad_input() {
    let net = two_bus(0.1, 0.0, 0.2);
    let mut sol = hand_solution(0.95, 0.1);
    assert!(matches!(
        detect_congestion(&net, &sol, &Limits::from_network(&net, 2)),
        Err(AcError::Dimension(_))
    ));
    sol.converged = false;
    assert_eq!(
        detect_congestion(&net, &sol, &Limits::from_network(&net, 1)),
        Err(AcError::Unconverged)
    );
}

#[test]
fn gap_is_zero_without_load() {
    let net = chain(3);
    let g = lin_vs_ac_gap(&net, &Demand::zeros(net.n_users(), 2)).unwrap();
    assert!(g.max_u < 1e-15 && g.max_flow < 1e-15);
}

#[test]
fn gap_is_small_at_light_load() {
    let net = chain(4);
    // four users of 0.047 p.u. per phase: trunk just under 20% of its rating
    let d = balanced(&net, 1, Complex64::new(0.045, 0.015));
    let sol = solve_ac_pf(&net, &d, AcOptions::default()).unwrap();
    assert!(sol.s_flow(0, Phase::A, 0).norm() <= 0.2);
    assert!(lin_vs_ac_gap(&net, &d).unwrap().max_u <= 1e-3);
}

#[test]
fn gap_grows_with_load() {
    let net = chain(5);
    let base = balanced(&net, 1, Complex64::new(0.02, 0.008));
    let gaps: Vec<f64> = (1..=8)
        .map(|k| lin_vs_ac_gap(&net, &base.scaled(k as f64)).unwrap().max_u)
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
}

#[test]
fn linear_voltage_is_optimistic() {
    for seed in 0..40u64 {
        let inst = common::small_instance(seed, 0, 4, 3);
        let ac = solve_ac_pf(&inst.net, &inst.demand, AcOptions::default()).unwrap();
        let lin = evaluate_lin_pf(&inst.net, &inst.demand);
        for t in 0..inst.demand.horizon() {
            for bus in 1..inst.net.n_buses() {
                for p in inst.net.energized(bus).iter() {
                    assert!(lin.u(bus, p, t) >= ac.v(bus, p, t).norm_sqr() - 1e-12, "seed {seed}");
                }
            }
        }
    }
}

#[test]
fn grid_must_start_at_zero_and_ascend() {
    let inst = common::small_instance(3, 0, 2, 2);
    let run = |grid: &[f64]| {
        tighten_and_resolve(
            &inst.net,
            &inst.demand,
            &inst.contracts,
            &inst.limits,
            grid,
            ThermalPolygon::default(),
            &SolveOptions::default(),
        )
    };
    assert_eq!(run(&[0.01, 0.02]).unwrap_err(), AcError::Grid);
    assert_eq!(run(&[0.0, 0.02, 0.01]).unwrap_err(), AcError::Grid);
    assert_eq!(run(&[]).unwrap_err(), AcError::Grid);
}

#[test]
fn uncongested_feeder_needs_no_tightening() {
    let net = chain(3);
    let d = balanced(&net, 4, Complex64::new(0.02, 0.006));
    let limits = Limits::from_network(&net, 4);
    let simple = preset_by_name("simple", 60).unwrap();
    let contracts: Vec<Contract> = (0..3).map(|u| Contract::new(&format!("u{u}"), 2.0, &simple)).collect();
    let res = tighten_and_resolve(
        &net,
        &d,
        &contracts,
        &limits,
        &default_delta_grid(),
        ThermalPolygon::default(),
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(res.delta_star, Some(0.0));
    assert_eq!(res.trace.len(), 1);
    let s = res.schedule.unwrap();
    assert_eq!(s.objective, 0);
    assert_eq!(s.demand, d);
}

#[test]
fn tightened_schedules_meet_original_limits() {
    let grid = default_delta_grid();
    let mut found = 0;
    for seed in 0..60u64 {
        let inst = common::small_instance(9_000 + seed, (seed % 5) as usize, 4, 4);
        let res = tighten_and_resolve(
            &inst.net,
            &inst.demand,
            &inst.contracts,
            &inst.limits,
            &grid,
            ThermalPolygon::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(res.trace.len() <= grid.len());
        let infeasible_at = res.trace.iter().position(|s| s.milp == MilpStatus::Infeasible);
        if let Some(k) = infeasible_at {
            assert!(res.trace[k + 1..].iter().all(|s| s.milp == MilpStatus::Skipped));
            assert!(res.is_exhausted());
        }
        if let (Some(delta), Some(s)) = (res.delta_star, &res.schedule) {
            found += 1;
            let sol = solve_ac_pf(&inst.net, &s.demand, AcOptions::default()).unwrap();
            assert!(
                detect_congestion(&inst.net, &sol, &inst.limits).unwrap().is_empty(),
                "seed {seed}"
            );
            let last = res.trace.last().unwrap();
            assert_eq!(last.delta, delta);
            assert!(last.ac_feasible);
        }
    }
    assert!(found > 0);
}
