//! JSON feeder files. Impedances are stored in ohms and ratings in kVA; the
//! loader converts to per unit on the file's base.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::feeder::{Bus, Feeder, UserAttachment};
use super::phase::PhaseSet;
use super::units::{per_unit_convert, to_physical, Base, PhysicalBranch};
use super::{NetError, DEFAULT_VMAX_PU, DEFAULT_VMIN_PU};

#[derive(Debug, Serialize, Deserialize)]
pub struct FeederFile {
    pub base: BaseFile,
    pub buses: Vec<BusFile>,
    pub branches: Vec<BranchFile>,
    #[serde(default)]
    pub users: Vec<UserFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaseFile {
    pub voltage_v: f64,
    pub power_va: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BusFile {
    pub id: String,
    pub phases: PhaseSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmin_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmax_pu: Option<f64>,
    #[serde(default)]
    pub source: bool,
}

/// A matrix given in full, as its diagonal, or as one value for every phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Full(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
    Scalar(f64),
}

impl MatrixSpec {
    fn expand(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            MatrixSpec::Full(m) => m.clone(),
            MatrixSpec::Diagonal(d) => (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            if i == j {
                                d.get(i).copied().unwrap_or(f64::NAN)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
            MatrixSpec::Scalar(v) => (0..n)
                .map(|i| (0..n).map(|j| if i == j { *v } else { 0.0 }).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BranchFile {
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    pub r: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<MatrixSpec>,
    pub s_rated_kva: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UserFile {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
}

impl FeederFile {
    pub fn into_feeder(self) -> Result<Feeder, NetError> {
        let base = Base::new(self.base.voltage_v, self.base.power_va)?;
        let physical: Vec<PhysicalBranch> = self
            .branches
            .iter()
            .map(|b| {
                let n = b.phases.len();
                PhysicalBranch {
                    from: b.from.clone(),
                    to: b.to.clone(),
                    phases: b.phases,
                    r_ohm: b.r.expand(n),
                    x_ohm: b
                        .x
                        .as_ref()
                        .map(|x| x.expand(n))
                        .unwrap_or_else(|| vec![vec![0.0; n]; n]),
                    s_rated_kva: b.s_rated_kva,
                }
            })
            .collect();
        let branches = per_unit_convert(base, &physical)?;
        let buses = self
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                phases: b.phases,
                vmin_pu: b.vmin_pu.unwrap_or(DEFAULT_VMIN_PU),
                vmax_pu: b.vmax_pu.unwrap_or(DEFAULT_VMAX_PU),
                is_source: b.source,
            })
            .collect();
        let users = self
            .users
            .into_iter()
            .map(|u| UserAttachment {
                user_id: u.id,
                bus_id: u.bus,
                phases: u.phases,
            })
            .collect();
        Ok(Feeder {
            buses,
            branches,
            users,
            base_voltage_v: base.voltage_v,
            base_power_va: base.power_va,
        })
    }

    pub fn from_feeder(feeder: &Feeder) -> Result<Self, NetError> {
        let base = Base::new(feeder.base_voltage_v, feeder.base_power_va)?;
        Ok(FeederFile {
            base: BaseFile {
                voltage_v: base.voltage_v,
                power_va: base.power_va,
            },
            buses: feeder
                .buses
                .iter()
                .map(|b| BusFile {
                    id: b.id.clone(),
                    phases: b.phases,
                    vmin_pu: Some(b.vmin_pu),
                    vmax_pu: Some(b.vmax_pu),
                    source: b.is_source,
                })
                .collect(),
            branches: feeder
                .branches
                .iter()
                .map(|br| {
                    let pb = to_physical(base, br);
                    BranchFile {
                        from: pb.from,
                        to: pb.to,
                        phases: pb.phases,
                        r: MatrixSpec::Full(pb.r_ohm),
                        x: Some(MatrixSpec::Full(pb.x_ohm)),
                        s_rated_kva: pb.s_rated_kva,
                    }
                })
                .collect(),
            users: feeder
                .users
                .iter()
                .map(|u| UserFile {
                    id: u.user_id.clone(),
                    bus: u.bus_id.clone(),
                    phases: u.phases,
                })
                .collect(),
        })
    }
}

pub fn parse_feeder_json(text: &str) -> Result<Feeder, NetError> {
    let file: FeederFile = serde_json::from_str(text).map_err(|e| NetError::Format(e.to_string()))?;
    file.into_feeder()
}

pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder, NetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))?;
    parse_feeder_json(&text)
}

pub fn feeder_to_json(feeder: &Feeder) -> Result<String, NetError> {
    let file = FeederFile::from_feeder(feeder)?;
    serde_json::to_string_pretty(&file).map_err(|e| NetError::Format(e.to_string()))
}

pub fn save_feeder(feeder: &Feeder, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    std::fs::write(path, feeder_to_json(feeder)?).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{validate_feeder, Phase};

    const SAMPLE: &str = r#"{
      "base": {"voltage_v": 230.0, "power_va": 10000.0},
      "buses": [
        {"id": "src", "phases": ["a","b","c"], "source": true},
        {"id": "n1", "phases": ["a","b","c"], "vmin_pu": 0.92},
        {"id": "h1", "phases": ["b"]}
      ],
      "branches": [
        {"from": "src", "to": "n1", "phases": ["a","b","c"],
         "r": [[0.02,0.005,0.005],[0.005,0.02,0.005],[0.005,0.005,0.02]],
         "x": [0.01,0.01,0.01], "s_rated_kva": 60},
        {"from": "n1", "to": "h1", "phases": ["b"], "r": 0.4, "s_rated_kva": 15}
      ],
      "users": [{"id": "u1", "bus": "h1", "phases": ["b"]}]
    }"#;

    #[test]
    fn loads_sample() {
        let f = parse_feeder_json(SAMPLE).unwrap();
        assert!(validate_feeder(&f).is_empty());
        assert_eq!(f.buses[1].vmin_pu, 0.92);
        assert_eq!(f.buses[2].vmax_pu, DEFAULT_VMAX_PU);
        let z = f.branches[1].z.get(Phase::B, Phase::B);
        assert!((z.re - 0.4 / 5.29).abs() < 1e-12);
        assert_eq!(z.im, 0.0);
        let m = f.branches[0].z.get(Phase::A, Phase::C);
        assert!((m.re - 0.005 / 5.29).abs() < 1e-12);
        assert!((f.branches[1].s_rated_pu - 1.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let f = parse_feeder_json(SAMPLE).unwrap();
        let again = parse_feeder_json(&feeder_to_json(&f).unwrap()).unwrap();
        assert_eq!(f.buses, again.buses);
        assert_eq!(f.users, again.users);
        for (a, b) in f.branches.iter().zip(&again.branches) {
            for p in Phase::ALL {
                for q in Phase::ALL {
                    assert!((a.z.get(p, q) - b.z.get(p, q)).norm() < 1e-15);
                }
            }
            assert!((a.s_rated_pu - b.s_rated_pu).abs() < 1e-12);
        }
    }
}
