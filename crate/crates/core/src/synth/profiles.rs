use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng, ScenarioParams, SynthError, STREAM_PROFILES};
use crate::demand::Demand;
use crate::net::{Feeder, Network, Phase, PhaseSet};

/// Forecast demand per user, phase and timestep in kW and kvar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub horizon: usize,
    pub step_minutes: u32,
    pub users: Vec<String>,
    /// Phases carrying data for each user.
    pub phases: Vec<PhaseSet>,
    p_kw: Vec<f64>,
    q_kvar: Vec<f64>,
}

impl ProfileSet {
    pub fn zeros(users: Vec<String>, phases: Vec<PhaseSet>, horizon: usize, step_minutes: u32) -> Self {
        assert_eq!(users.len(), phases.len());
        let n = users.len() * 3 * horizon;
        ProfileSet {
            horizon,
            step_minutes,
            users,
            phases,
            p_kw: vec![0.0; n],
            q_kvar: vec![0.0; n],
        }
    }

    /// Zero profiles over the users and attachment phases of `feeder`.
    pub fn for_feeder(feeder: &Feeder, horizon: usize, step_minutes: u32) -> Self {
        ProfileSet::zeros(
            feeder.users.iter().map(|u| u.user_id.clone()).collect(),
            feeder.users.iter().map(|u| u.phases).collect(),
            horizon,
            step_minutes,
        )
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    fn idx(&self, user: usize, phase: Phase, t: usize) -> usize {
        (user * 3 + phase.index()) * self.horizon + t
    }

    pub fn p(&self, user: usize, phase: Phase, t: usize) -> f64 {
        self.p_kw[self.idx(user, phase, t)]
    }

    pub fn q(&self, user: usize, phase: Phase, t: usize) -> f64 {
        self.q_kvar[self.idx(user, phase, t)]
    }

    pub fn set(&mut self, user: usize, phase: Phase, t: usize, p_kw: f64, q_kvar: f64) {
        let i = self.idx(user, phase, t);
        self.p_kw[i] = p_kw;
        self.q_kvar[i] = q_kvar;
    }

    pub fn add(&mut self, user: usize, phase: Phase, t: usize, p_kw: f64, q_kvar: f64) {
        let i = self.idx(user, phase, t);
        self.p_kw[i] += p_kw;
        self.q_kvar[i] += q_kvar;
    }

    /// `self * k + other`, elementwise; both sets must share dimensions.
    pub fn scaled_plus(&self, k: f64, other: &ProfileSet) -> ProfileSet {
        let mut out = self.clone();
        for (a, b) in out.p_kw.iter_mut().zip(&other.p_kw) {
            *a = *a * k + b;
        }
        for (a, b) in out.q_kvar.iter_mut().zip(&other.q_kvar) {
            *a = *a * k + b;
        }
        out
    }

    /// Per-unit demand aligned with the users of `net`. Every network user
    /// needs profiles on exactly its attachment phases.
    pub fn to_demand(&self, net: &Network) -> Result<Demand, SynthError> {
        let base_kva = net.feeder.base_power_va / 1000.0;
        let index: HashMap<&str, usize> = self.users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        for u in &self.users {
            if !net.feeder.users.iter().any(|a| &a.user_id == u) {
                return Err(SynthError::UnknownUser(u.clone()));
            }
        }
        let mut d = Demand::zeros(net.n_users(), self.horizon);
        for (u, att) in net.feeder.users.iter().enumerate() {
            let &i = index
                .get(att.user_id.as_str())
                .ok_or_else(|| SynthError::Profile(format!("no profile for user '{}'", att.user_id)))?;
            if self.phases[i] != att.phases {
                return Err(SynthError::Profile(format!(
                    "user '{}' has profiles on phases {} but is attached to {}",
                    att.user_id, self.phases[i], att.phases
                )));
            }
            for p in att.phases.iter() {
                for t in 0..self.horizon {
                    d.set(u, p, t, Complex64::new(self.p(i, p, t), self.q(i, p, t)) / base_kva);
                }
            }
        }
        Ok(d)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SynthError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "user", "phase", "p_kw", "q_kvar"])?;
        for t in 0..self.horizon {
            for (u, id) in self.users.iter().enumerate() {
                for p in self.phases[u].iter() {
                    out.write_record([
                        t.to_string(),
                        id.clone(),
                        p.to_string(),
                        self.p(u, p, t).to_string(),
                        self.q(u, p, t).to_string(),
                    ])?;
                }
            }
        }
        out.flush().map_err(|e| SynthError::Io(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SynthError> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| SynthError::Io(e.to_string()))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parses the CSV layout written by [`ProfileSet::write_csv`]. Users
    /// appear in order of first occurrence; every (user, phase) present
    /// must cover `t = 0..horizon` exactly once.
    pub fn read_csv<R: Read>(r: R, step_minutes: u32) -> Result<ProfileSet, SynthError> {
        if step_minutes == 0 {
            return Err(SynthError::Params("step_minutes must be positive".into()));
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["t", "user", "phase", "p_kw", "q_kvar"] {
            return Err(SynthError::Profile("header must be t,user,phase,p_kw,q_kvar".into()));
        }
        let mut users: Vec<String> = Vec::new();
        let mut user_index: HashMap<String, usize> = HashMap::new();
        let mut values: BTreeMap<(usize, Phase, usize), (f64, f64)> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| SynthError::Profile(format!("line {row}: missing field")))
            };
            let t: usize = field(0)?
                .parse()
                .map_err(|_| SynthError::Profile(format!("line {row}: bad timestep")))?;
            let user = field(1)?.to_string();
            if user.is_empty() {
                return Err(SynthError::Profile(format!("line {row}: empty user")));
            }
            let phase = Phase::parse(field(2)?).ok_or_else(|| SynthError::Profile(format!("line {row}: bad phase")))?;
            let num = |i: usize| -> Result<f64, SynthError> {
                field(i)?
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| SynthError::Profile(format!("line {row}: bad number")))
            };
            let (p, q) = (num(3)?, num(4)?);
            let next = users.len();
            let u = *user_index.entry(user.clone()).or_insert(next);
            if u == next {
                users.push(user.clone());
            }
            if values.insert((u, phase, t), (p, q)).is_some() {
                return Err(SynthError::Duplicate { t, user, phase });
            }
        }
        if values.is_empty() {
            return Err(SynthError::Profile("no data rows".into()));
        }
        let horizon = values.keys().map(|k| k.2).max().unwrap_or(0) + 1;
        let mut phases = vec![PhaseSet::EMPTY; users.len()];
        for &(u, p, _) in values.keys() {
            phases[u].insert(p);
        }
        for (u, set) in phases.iter().enumerate() {
            for p in set.iter() {
                let count = values.range((u, p, 0)..=(u, p, usize::MAX)).count();
                if count != horizon {
                    return Err(SynthError::Profile(format!(
                        "user '{}' phase {p} covers {count} of {horizon} steps",
                        users[u]
                    )));
                }
            }
        }
        let mut set = ProfileSet::zeros(users, phases, horizon, step_minutes);
        for ((u, p, t), (pk, qk)) in values {
            set.set(u, p, t, pk, qk);
        }
        Ok(set)
    }
}

/// Loads a profile CSV written by [`ProfileSet::save`].
pub fn load_profiles(path: impl AsRef<Path>, step_minutes: u32) -> Result<ProfileSet, SynthError> {
    let f =
        std::fs::File::open(path.as_ref()).map_err(|e| SynthError::Io(format!("{}: {e}", path.as_ref().display())))?;
    ProfileSet::read_csv(std::io::BufReader::new(f), step_minutes)
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    // circular distance so peaks near midnight wrap smoothly
    let d = (h - centre).rem_euclid(24.0);
    let d = d.min(24.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

/// Daily household shape with a morning and an evening peak; maximum 1.
fn household_shape(h: f64, shift: f64, morning: f64) -> f64 {
    let raw = |h: f64| 0.22 + morning * bump(h, 7.5 + shift, 1.1) + bump(h, 18.75 + shift, 1.9);
    let peak = (0..24 * 12).map(|k| raw(k as f64 / 12.0)).fold(0.0, f64::max);
    raw(h) / peak
}

/// Smooth baseline profiles: one shape per user with random peak time
/// shift, morning weight, peak in the configured band and, for three-phase
/// users, a random phase split.
pub fn generate_baseline_profiles(feeder: &Feeder, params: &ScenarioParams) -> Result<ProfileSet, SynthError> {
    params.validate()?;
    let mut rng = rng(params.seed, STREAM_PROFILES);
    let mut set = ProfileSet::for_feeder(feeder, params.horizon, params.step_minutes);
    let tan = params.q_ratio();
    for (u, att) in feeder.users.iter().enumerate() {
        let shift: f64 = rng.random_range(-0.75..=0.75);
        let morning: f64 = rng.random_range(0.3..=0.6);
        let peak = if params.peak_kw_max > params.peak_kw_min {
            rng.random_range(params.peak_kw_min..=params.peak_kw_max)
        } else {
            params.peak_kw_min
        };
        let mut weights: Vec<(Phase, f64)> = att.phases.iter().map(|p| (p, rng.random_range(0.7..=1.3))).collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        weights.iter_mut().for_each(|w| w.1 /= total);
        for t in 0..params.horizon {
            let h = (t as f64 + 0.5) * params.step_minutes as f64 / 60.0;
            let p = peak * household_shape(h, shift, morning);
            for &(ph, w) in &weights {
                set.set(u, ph, t, p * w, p * w * tan);
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_feeder;

    fn params() -> ScenarioParams {
        ScenarioParams {
            n_users: 8,
            ..Default::default()
        }
    }

    #[test]
    fn fifteen_minute_day() {
        let p = params();
        let f = generate_feeder(&p).unwrap();
        let s = generate_baseline_profiles(&f, &p).unwrap();
        assert_eq!(s.horizon, 96);
        let tan = p.q_ratio();
        for (u, att) in f.users.iter().enumerate() {
            let mut peak: f64 = 0.0;
            for t in 0..96 {
                let tot: f64 = att.phases.iter().map(|ph| s.p(u, ph, t)).sum();
                peak = peak.max(tot);
                for ph in att.phases.iter() {
                    assert!((s.q(u, ph, t) - s.p(u, ph, t) * tan).abs() < 1e-12);
                }
            }
            assert!(peak <= p.peak_kw_max + 1e-9 && peak >= 0.9 * p.peak_kw_min);
        }
    }

    #[test]
    fn zero_demand() {
        let p = ScenarioParams {
            peak_kw_min: 0.0,
            peak_kw_max: 0.0,
            ..params()
        };
        let f = generate_feeder(&p).unwrap();
        let s = generate_baseline_profiles(&f, &p).unwrap();
        assert_eq!(s, ProfileSet::for_feeder(&f, 96, 15));
    }

    #[test]
    fn csv_round_trip() {
        let p = params();
        let f = generate_feeder(&p).unwrap();
        let s = generate_baseline_profiles(&f, &p).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(ProfileSet::read_csv(buf.as_slice(), 15).unwrap(), s);
    }

    #[test]
    fn small_csv() {
        let text = "t,user,phase,p_kw,q_kvar\n0,x,a,1,0\n1,x,a,2,0\n2,x,a,3,0\n3,x,a,4,0\n\
                    0,y,a,1,0\n1,y,a,1,0\n2,y,a,1,0\n3,y,a,1,0\n";
        let s = ProfileSet::read_csv(text.as_bytes(), 15).unwrap();
        assert_eq!(s.horizon, 4);
        assert_eq!(s.n_users(), 2);
        assert_eq!(s.p(0, Phase::A, 3), 4.0);
    }

    #[test]
    fn duplicate_named() {
        let text = "t,user,phase,p_kw,q_kvar\n0,x,a,1,0\n0,x,a,2,0\n";
        let e = ProfileSet::read_csv(text.as_bytes(), 15).unwrap_err();
        assert_eq!(
            e,
            SynthError::Duplicate {
                t: 0,
                user: "x".into(),
                phase: Phase::A
            }
        );
        assert!(e.to_string().contains("t=0") && e.to_string().contains("'x'"));
    }

    #[test]
    fn malformed_and_gaps() {
        assert!(ProfileSet::read_csv("t,user,phase,p_kw,q_kvar\n0,x,d,1,0\n".as_bytes(), 15).is_err());
        assert!(ProfileSet::read_csv("t,user,phase,p_kw,q_kvar\n0,x,a,one,0\n".as_bytes(), 15).is_err());
        assert!(ProfileSet::read_csv("t,user,phase,p_kw\n0,x,a,1\n".as_bytes(), 15).is_err());
        let gap = "t,user,phase,p_kw,q_kvar\n0,x,a,1,0\n1,x,a,1,0\n0,y,a,1,0\n";
        assert!(ProfileSet::read_csv(gap.as_bytes(), 15).is_err());
    }

    #[test]
    fn unknown_user_rejected() {
        let p = params();
        let f = generate_feeder(&p).unwrap();
        let net = Network::new(f.clone()).unwrap();
        let mut s = generate_baseline_profiles(&f, &p).unwrap();
        s.users[0] = "ghost".into();
        assert_eq!(s.to_demand(&net), Err(SynthError::UnknownUser("ghost".into())));
    }
}
