use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::feeder::{Branch, PhaseMatrix};
use super::phase::PhaseSet;
use super::NetError;

/// Per-unit base: line-to-neutral voltage and single-phase power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Base {
    pub voltage_v: f64,
    pub power_va: f64,
}

impl Base {
    pub fn new(voltage_v: f64, power_va: f64) -> Result<Self, NetError> {
        if !(voltage_v > 0.0 && power_va > 0.0 && voltage_v.is_finite() && power_va.is_finite()) {
            return Err(NetError::Base { voltage_v, power_va });
        }
        Ok(Base { voltage_v, power_va })
    }

    pub fn impedance_ohm(&self) -> f64 {
        self.voltage_v * self.voltage_v / self.power_va
    }

    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw * 1e3 / self.power_va
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * self.power_va / 1e3
    }
}

/// Branch data in physical units: impedance matrices over the branch phases
/// (row-major, a-b-c order) in ohms, rating in kVA per phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalBranch {
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    pub r_ohm: Vec<Vec<f64>>,
    pub x_ohm: Vec<Vec<f64>>,
    pub s_rated_kva: f64,
}

pub fn per_unit_convert(base: Base, branches: &[PhysicalBranch]) -> Result<Vec<Branch>, NetError> {
    let base = Base::new(base.voltage_v, base.power_va)?;
    let zb = base.impedance_ohm();
    branches
        .iter()
        .map(|pb| {
            let n = pb.phases.len();
            let label = format!("{} -> {}", pb.from, pb.to);
            let dims_ok = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
            if !dims_ok(&pb.r_ohm) || !dims_ok(&pb.x_ohm) {
                return Err(NetError::Format(format!("branch {label}: impedance must be {n}x{n}")));
            }
            let phases: Vec<_> = pb.phases.iter().collect();
            let mut z = PhaseMatrix::zero();
            for (i, &p) in phases.iter().enumerate() {
                if !(pb.r_ohm[i][i] > 0.0) {
                    return Err(NetError::Format(format!(
                        "branch {label}: resistance must be positive on phase {p}"
                    )));
                }
                for (j, &q) in phases.iter().enumerate() {
                    z.set(p, q, Complex64::new(pb.r_ohm[i][j], pb.x_ohm[i][j]) / zb);
                }
            }
            if !(pb.s_rated_kva > 0.0) {
                return Err(NetError::Format(format!("branch {label}: rating must be positive")));
            }
            Ok(Branch {
                from: pb.from.clone(),
                to: pb.to.clone(),
                phases: pb.phases,
                z,
                s_rated_pu: pb.s_rated_kva * 1e3 / base.power_va,
            })
        })
        .collect()
}

pub fn to_physical(base: Base, branch: &Branch) -> PhysicalBranch {
    let zb = base.impedance_ohm();
    let phases: Vec<_> = branch.phases.iter().collect();
    let mat = |f: fn(Complex64) -> f64| -> Vec<Vec<f64>> {
        phases
            .iter()
            .map(|&p| phases.iter().map(|&q| f(branch.z.get(p, q)) * zb).collect())
            .collect()
    };
    PhysicalBranch {
        from: branch.from.clone(),
        to: branch.to.clone(),
        phases: branch.phases,
        r_ohm: mat(|c| c.re),
        x_ohm: mat(|c| c.im),
        s_rated_kva: branch.s_rated_pu * base.power_va / 1e3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::phase::Phase;
    use proptest::prelude::*;

    fn single(r: f64, x: f64) -> PhysicalBranch {
        PhysicalBranch {
            from: "1".into(),
            to: "2".into(),
            phases: PhaseSet::single(Phase::A),
            r_ohm: vec![vec![r]],
            x_ohm: vec![vec![x]],
            s_rated_kva: 10.0,
        }
    }

    #[test]
    fn hand_computed_pu() {
        let base = Base::new(230.0, 10_000.0).unwrap();
        let br = per_unit_convert(base, &[single(0.4, 0.0)]).unwrap();
        let z = br[0].z.get(Phase::A, Phase::A);
        // 0.4 / (230^2 / 10000)
        assert!((z.re - 0.075_614_366_729_678_6).abs() < 1e-12);
        assert!((br[0].s_rated_pu - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_resistance_rejected() {
        let base = Base::new(230.0, 10_000.0).unwrap();
        let err = per_unit_convert(base, &[single(0.0, 0.1)]).unwrap_err();
        assert!(err.to_string().contains("resistance must be positive"));
    }

    #[test]
    fn unit_base_is_identity() {
        let base = Base::new(1.0, 1.0).unwrap();
        let mut pb = single(0.3, 0.2);
        pb.s_rated_kva = 0.001;
        let br = per_unit_convert(base, &[pb]).unwrap();
        assert_eq!(br[0].z.get(Phase::A, Phase::A), Complex64::new(0.3, 0.2));
        assert_eq!(br[0].s_rated_pu, 1.0);
    }

    #[test]
    fn bad_bases_rejected() {
        assert!(Base::new(0.0, 1.0).is_err());
        assert!(Base::new(230.0, -5.0).is_err());
    }

    proptest! {
        #[test]
        fn ohm_round_trip(
            v in 100.0f64..20_000.0,
            s in 1e3f64..1e6,
            r in prop::collection::vec(0.001f64..2.0, 3),
            m in 0.0f64..0.5,
            x in prop::collection::vec(0.0f64..1.0, 3),
            kva in 1.0f64..500.0,
        ) {
            let mut rm = vec![vec![0.0; 3]; 3];
            let mut xm = vec![vec![0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    rm[i][j] = if i == j { r[i] } else { m * r[0].min(r[1]).min(r[2]) };
                    xm[i][j] = if i == j { x[i] } else { m * 0.1 };
                }
            }
            let pb = PhysicalBranch {
                from: "a".into(), to: "b".into(), phases: PhaseSet::ABC,
                r_ohm: rm.clone(), x_ohm: xm.clone(), s_rated_kva: kva,
            };
            let base = Base::new(v, s).unwrap();
            let back = to_physical(base, &per_unit_convert(base, &[pb]).unwrap()[0]);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((back.r_ohm[i][j] - rm[i][j]).abs() <= 1e-12 * rm[i][j].abs().max(1e-300));
                    prop_assert!((back.x_ohm[i][j] - xm[i][j]).abs() <= 1e-12 * xm[i][j].abs().max(1e-300));
                }
            }
            prop_assert!((back.s_rated_kva - kva).abs() <= 1e-12 * kva);
        }
    }
}
