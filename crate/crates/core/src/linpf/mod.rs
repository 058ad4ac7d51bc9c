//! Linearised unbalanced branch flow: lifted voltages `u = |V|^2`, lossless
//! diagonal flows and a constant phase-rotation matrix for the off-diagonal
//! terms. Provides the constraint blocks used by the scheduler and a direct
//! evaluator for fixed demands.

mod blocks;
mod eval;
mod gamma;

use thiserror::Error;

pub(crate) use blocks::check_limits;
pub use blocks::{
    build_balance, build_limits, build_ohm, fill_assignment, lin_step_violation, Limits, ThermalPolygon, Tightening,
    DEFAULT_POLYGON_SIDES,
};
pub use eval::{evaluate_lin_pf, lin_pf_step, LinPfSolution, LinStep};
pub use gamma::{gamma_matrix, offdiag_flow, rotation, GammaMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum LinPfError {
    #[error("invalid tightening: {0}")]
    Tightening(String),
    #[error("thermal polygon needs at least 3 sides, got {0}")]
    Polygon(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use proptest::prelude::*;

    use super::*;
    use crate::demand::Demand;
    use crate::lp::VarRegistry;
    use crate::net::{FeederBuilder, Network, Phase, PhaseSet};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus(z: Complex64) -> Network {
        let f = FeederBuilder::new(230.0, 10_000.0)
            .source("s")
            .line("s", "b", PhaseSet::ABC, z, 5.0)
            .user("u", "b", PhaseSet::single(Phase::A))
            .build();
        Network::new(f).unwrap()
    }

    fn chain(n: usize, users: &[usize]) -> Network {
        let mut b = FeederBuilder::new(230.0, 10_000.0).source("b00");
        for i in 1..=n {
            b = b.line(
                &format!("b{:02}", i - 1),
                &format!("b{i:02}"),
                PhaseSet::ABC,
                c(0.01, 0.005),
                2.0,
            );
        }
        for &i in users {
            b = b.user(&format!("u{i:02}"), &format!("b{i:02}"), PhaseSet::ABC);
        }
        Network::new(b.build()).unwrap()
    }

    #[test]
    fn resistive_drop() {
        let net = two_bus(c(0.1, 0.0));
        let step = lin_pf_step(&net, &[[c(0.1, 0.0), c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!((step.u[1][0] - 0.98).abs() < 1e-12);
        assert!((step.lambda[0][0] - c(0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reactive_drop() {
        let net = two_bus(c(1e-3, 0.1));
        let step = lin_pf_step(&net, &[[c(0.0, 0.1), c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!((step.u[1][0] - 0.98).abs() < 1e-12);
    }

    #[test]
    fn single_phase_load_couples_other_phases() {
        let net = two_bus(c(0.1, 0.0));
        let step = lin_pf_step(&net, &[[c(0.1, 0.0), c(0.0, 0.0), c(0.0, 0.0)]]);
        // diagonal Z: only the loaded phase sees a drop
        assert!((step.u[1][1] - 1.0).abs() < 1e-12);
        assert!((step.u[1][2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_accumulates_downstream_loads() {
        let net = chain(2, &[1, 2]);
        let one = [c(1.0, 0.0); 3];
        let two = [c(2.0, 0.0); 3];
        let step = lin_pf_step(&net, &[one, two]);
        for p in 0..3 {
            assert!((step.lambda[0][p] - c(3.0, 0.0)).norm() < 1e-12);
            assert!((step.lambda[1][p] - c(2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn no_load_gives_flat_profile() {
        let net = chain(4, &[2, 4]);
        let step = lin_pf_step(&net, &[[c(0.0, 0.0); 3]; 2]);
        for u in &step.u {
            for p in u {
                assert_eq!(*p, 1.0);
            }
        }
    }

    fn demand_for(net: &Network, horizon: usize, scale: f64) -> Demand {
        let mut d = Demand::zeros(net.n_users(), horizon);
        for u in 0..net.n_users() {
            for p in net.user(u).phases.iter() {
                for t in 0..horizon {
                    let k = (u + 2 * p.index() + 3 * t) as f64;
                    d.set(u, p, t, c(scale * (0.05 + 0.01 * k), scale * 0.01 * k));
                }
            }
        }
        d
    }

    #[test]
    fn blocks_match_evaluator() {
        let net = chain(5, &[1, 3, 5]);
        let horizon = 3;
        let demand = demand_for(&net, horizon, 1.0);
        let sol = evaluate_lin_pf(&net, &demand);
        let mut reg = VarRegistry::new();
        let mut block = build_balance(&net, horizon, &mut reg);
        block.extend(build_ohm(&net, horizon, &mut reg));
        let x = fill_assignment(&reg, &sol, &demand);
        assert!(block.max_violation(&x) < 1e-12);
        assert!(!block.is_empty());
    }

    #[test]
    fn limit_block_agrees_with_checker() {
        let net = chain(5, &[1, 3, 5]);
        let horizon = 2;
        let limits = Limits::from_network(&net, horizon);
        for scale in [0.5, 4.0, 20.0] {
            let demand = demand_for(&net, horizon, scale);
            let sol = evaluate_lin_pf(&net, &demand);
            let mut reg = VarRegistry::new();
            let mut block = build_balance(&net, horizon, &mut reg);
            block.extend(build_ohm(&net, horizon, &mut reg));
            let lim = build_limits(&net, &limits, Tightening::NONE, ThermalPolygon::default(), &mut reg).unwrap();
            let x = fill_assignment(&reg, &sol, &demand);
            let direct = sol
                .steps
                .iter()
                .map(|s| lin_step_violation(&net, &limits, Tightening::NONE, ThermalPolygon::default(), s))
                .fold(0.0, f64::max);
            assert!((lim.max_violation(&x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn tightening_validation() {
        assert!(Tightening {
            voltage: 0.0,
            thermal: 1.0
        }
        .validate()
        .is_err());
        assert!(Tightening {
            voltage: -0.01,
            thermal: 0.0
        }
        .validate()
        .is_err());
        assert!(Tightening {
            voltage: 0.0,
            thermal: -0.1
        }
        .validate()
        .is_err());
        assert!(Tightening {
            voltage: 0.03,
            thermal: 0.03
        }
        .validate()
        .is_ok());
        assert_eq!(ThermalPolygon::new(2), Err(LinPfError::Polygon(2)));
    }

    #[test]
    fn tightening_shifts_rows() {
        let net = chain(1, &[1]);
        let limits = Limits::from_network(&net, 1);
        let mut reg = VarRegistry::new();
        let t = Tightening {
            voltage: 0.02,
            thermal: 0.1,
        };
        let block = build_limits(&net, &limits, t, ThermalPolygon::default(), &mut reg).unwrap();
        let vmin = block
            .rows
            .iter()
            .find(|r| matches!(r.tag, crate::lp::RowTag::VoltageMin { .. }))
            .unwrap();
        assert!((vmin.rhs - 0.92f64.powi(2)).abs() < 1e-15);
        let th = block
            .rows
            .iter()
            .find(|r| matches!(r.tag, crate::lp::RowTag::Thermal { .. }))
            .unwrap();
        let expect = 2.0 * 0.9 * (std::f64::consts::PI / 8.0).cos();
        assert!((th.rhs - expect).abs() < 1e-12);
    }

    #[test]
    fn octagon_example() {
        let poly = ThermalPolygon::default();
        // vertex on the real axis sits exactly on the boundary
        let s = poly.slacks(1.0, 0.0, 1.0);
        assert!(s.iter().all(|&v| v > -1e-12));
        assert!(s.iter().any(|&v| v.abs() < 1e-12));
        // a point on the circle between vertices lies outside
        let a = std::f64::consts::PI / 8.0;
        let s = poly.slacks(a.cos(), a.sin(), 1.0);
        assert!(s.iter().any(|&v| v < -1e-3));
        // the inscribed radius is cos(pi/8)
        let r = (std::f64::consts::PI / 8.0).cos();
        let s = poly.slacks(r * a.cos(), r * a.sin(), 1.0);
        assert!(s.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn voltage_is_monotone_in_load() {
        let net = chain(6, &[2, 4, 6]);
        let lo = lin_pf_step(&net, &demand_for(&net, 1, 1.0).at(0));
        let hi = lin_pf_step(&net, &demand_for(&net, 1, 2.0).at(0));
        for b in 0..net.n_buses() {
            for p in 0..3 {
                assert!(hi.u[b][p] <= lo.u[b][p] + 1e-15);
            }
        }
        // lifted voltage never increases along the chain under positive load
        for w in net.order.windows(2) {
            for p in 0..3 {
                assert!(lo.u[w[1]][p] <= lo.u[w[0]][p] + 1e-15);
            }
        }
    }

    #[test]
    fn balanced_load_gives_equal_phases() {
        let net = chain(3, &[3]);
        let s = c(0.2, 0.05);
        let step = lin_pf_step(&net, &[[s; 3]]);
        for u in &step.u {
            assert!((u[0] - u[1]).abs() < 1e-14 && (u[1] - u[2]).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn polygon_is_inside_circle(k in 3usize..24, angle in 0.0f64..6.3, r in 0.0f64..2.0) {
            let poly = ThermalPolygon::new(k).unwrap();
            let (re, im) = (r * angle.cos(), r * angle.sin());
            let inside = poly.slacks(re, im, 1.0).iter().all(|&v| v >= 0.0);
            if inside {
                prop_assert!(r <= 1.0 + 1e-12);
            }
            if r <= poly.offset() - 1e-12 {
                prop_assert!(inside);
            }
        }

        #[test]
        fn superposition(a in 0.0f64..0.5, b in 0.0f64..0.5) {
            let net = chain(3, &[1, 3]);
            let l1 = vec![[c(a, 0.1 * a); 3], [c(0.0, 0.0); 3]];
            let l2 = vec![[c(0.0, 0.0); 3], [c(b, -0.2 * b); 3]];
            let l12 = vec![l1[0], l2[1]];
            let (s1, s2, s12) = (lin_pf_step(&net, &l1), lin_pf_step(&net, &l2), lin_pf_step(&net, &l12));
            for bus in 0..net.n_buses() {
                for p in 0..3 {
                    let lin = s1.u[bus][p] + s2.u[bus][p] - 1.0;
                    prop_assert!((s12.u[bus][p] - lin).abs() < 1e-12);
                }
            }
        }
    }
}
