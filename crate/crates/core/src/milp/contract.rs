use serde::{Deserialize, Serialize};

use super::MilpError;

/// Power factor used for the default reactive threshold.
pub const DEFAULT_POWER_FACTOR: f64 = 0.95;

/// Reactive power matching `p` at the default power factor.
pub fn default_q(p: f64) -> f64 {
    p * DEFAULT_POWER_FACTOR.acos().tan()
}

/// Demand-reduction contract of one user. `None` means unlimited.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub user_id: String,
    /// Guaranteed active power, kW, split equally over the attachment phases.
    pub p_gtd_kw: f64,
    pub q_gtd_kvar: f64,
    /// Maximum number of reduction actions over the horizon.
    pub eta: Option<u32>,
    /// Maximum length of one reduction action, timesteps.
    pub alpha_steps: Option<u32>,
    /// Minimum number of idle steps between two reduction actions.
    pub delta_steps: u32,
}

impl Contract {
    /// Contract under `modality` with the default reactive threshold.
    pub fn new(user_id: &str, p_gtd_kw: f64, modality: &ModalityPreset) -> Self {
        Contract {
            user_id: user_id.into(),
            p_gtd_kw,
            q_gtd_kvar: default_q(p_gtd_kw),
            eta: modality.eta,
            alpha_steps: modality.alpha_steps,
            delta_steps: modality.delta_steps,
        }
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        if !(self.p_gtd_kw >= 0.0 && self.p_gtd_kw.is_finite()) || !self.q_gtd_kvar.is_finite() {
            return Err(MilpError::Contract(format!(
                "user '{}': guaranteed power must be finite and p >= 0",
                self.user_id
            )));
        }
        if self.alpha_steps == Some(0) {
            return Err(MilpError::Contract(format!(
                "user '{}': maximum duration must be at least one step",
                self.user_id
            )));
        }
        Ok(())
    }

    /// Whether activation and deactivation indicators are needed.
    pub fn needs_transitions(&self) -> bool {
        self.eta.is_some() || self.delta_steps > 0
    }

    /// Whether any comfort row constrains this user.
    pub fn has_comfort_rows(&self) -> bool {
        self.needs_transitions() || self.alpha_steps.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityPreset {
    pub name: String,
    pub eta: Option<u32>,
    pub alpha_steps: Option<u32>,
    pub delta_steps: u32,
}

/// Named presets as (name, activations, max hours, min gap hours).
const PRESETS: [(&str, Option<u32>, Option<u32>, u32); 5] = [
    ("simple", None, None, 0),
    ("single", Some(1), Some(6), 0),
    ("double", Some(2), Some(3), 0),
    ("double_delta", Some(2), Some(3), 3),
    ("triple_delta", Some(3), Some(2), 2),
];

pub const PRESET_NAMES: [&str; 5] = ["simple", "single", "double", "double_delta", "triple_delta"];

/// The five standard modalities with durations converted to timesteps of
/// `step_minutes`. The step must divide one hour.
pub fn preset_modalities(step_minutes: u32) -> Result<Vec<ModalityPreset>, MilpError> {
    if step_minutes == 0 || 60 % step_minutes != 0 {
        return Err(MilpError::Step(step_minutes));
    }
    let per_hour = 60 / step_minutes;
    Ok(PRESETS
        .iter()
        .map(|&(name, eta, alpha_h, delta_h)| ModalityPreset {
            name: name.into(),
            eta,
            alpha_steps: alpha_h.map(|h| h * per_hour),
            delta_steps: delta_h * per_hour,
        })
        .collect())
}

pub fn preset_by_name(name: &str, step_minutes: u32) -> Result<ModalityPreset, MilpError> {
    preset_modalities(step_minutes)?
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| MilpError::Modality(name.into()))
}
