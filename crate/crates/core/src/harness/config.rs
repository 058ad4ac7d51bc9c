use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::ac::default_delta_grid;
use crate::linpf::DEFAULT_POLYGON_SIDES;
use crate::milp::preset_modalities;
use crate::synth::ScenarioParams;

/// Environment variable holding the worker count of a sweep.
pub const WORKERS_ENV: &str = "LVFLEX_WORKERS";

/// A cohort of generated feeders crossed with a list of modalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Number of feeders in the cohort.
    pub feeders: usize,
    /// User counts are spread evenly over this range.
    pub users_min: usize,
    pub users_max: usize,
    /// Feeder `i` is generated with seed `seed + i`.
    pub seed: u64,
    pub modalities: Vec<String>,
    /// Tightening grid, ascending from zero.
    pub delta_grid: Vec<f64>,
    /// Wall-time budget per feeder and modality, seconds.
    pub time_limit_s: f64,
    /// Optional search-node budget per solve block; unlike the time limit
    /// it makes budget-bound rows reproducible.
    pub node_limit: Option<usize>,
    pub polygon_sides: usize,
    /// Output directory; not part of the config hash.
    pub out_dir: String,
    /// Generation parameters shared by the cohort; `n_users` and `seed`
    /// are set per feeder.
    pub scenario: ScenarioParams,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            feeders: 20,
            users_min: 10,
            users_max: 30,
            seed: 1,
            modalities: ["simple", "single", "double", "double_delta", "triple_delta"]
                .map(String::from)
                .to_vec(),
            delta_grid: default_delta_grid(),
            time_limit_s: 60.0,
            node_limit: None,
            polygon_sides: DEFAULT_POLYGON_SIDES,
            out_dir: "out".into(),
            scenario: ScenarioParams::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.feeders == 0 {
            return bad("cohort must hold at least one feeder".into());
        }
        if self.modalities.is_empty() {
            return bad("modality list is empty".into());
        }
        if self.users_min == 0 || self.users_min > self.users_max {
            return bad(format!("bad user range {}..={}", self.users_min, self.users_max));
        }
        if self.delta_grid.first() != Some(&0.0) || self.delta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("delta grid must be ascending and start at 0".into());
        }
        if !(self.time_limit_s > 0.0 && self.time_limit_s.is_finite()) {
            return bad(format!("time limit must be positive, got {}", self.time_limit_s));
        }
        if self.node_limit == Some(0) {
            return bad("node limit must be positive".into());
        }
        let presets = preset_modalities(self.scenario.step_minutes).map_err(|e| HarnessError::Config(e.to_string()))?;
        for m in &self.modalities {
            if !presets.iter().any(|p| &p.name == m) {
                return bad(format!("unknown modality '{m}'"));
            }
        }
        self.scenario
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// User count of feeder `i`, spread evenly over the configured range.
    pub fn users_of(&self, i: usize) -> usize {
        if self.feeders == 1 {
            return self.users_min;
        }
        let span = (self.users_max - self.users_min) as f64;
        self.users_min + (span * i as f64 / (self.feeders - 1) as f64).round() as usize
    }

    pub fn feeder_id(i: usize) -> String {
        format!("f{:03}", i + 1)
    }

    /// Generation parameters of feeder `i`.
    pub fn scenario_of(&self, i: usize) -> ScenarioParams {
        ScenarioParams {
            n_users: self.users_of(i),
            seed: self.seed + i as u64,
            ..self.scenario.clone()
        }
    }

    /// Hex digest (16 characters) over everything that affects results.
    pub fn hash(&self) -> String {
        let key = SweepConfig {
            out_dir: String::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&key).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
