use serde::{Deserialize, Serialize};

use super::SynthError;

/// Phase that carries a user's EV charger.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvPhasePolicy {
    /// The attachment phase of single-phase users; uniformly random among
    /// the three phases for three-phase users.
    #[default]
    Attachment,
    /// Like `Attachment`, but three-phase users cycle a, b, c in user order.
    RoundRobin,
}

/// How the generator makes a scenario congested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionRule {
    /// Rescale the baseline until the forecast violates a limit, then
    /// multiply the scale by `congestion_severity`; reinforce the feeder
    /// until every user at guaranteed power is feasible.
    #[default]
    Rescale,
    /// Use the generated profiles as they are.
    None,
}

/// Scenario generation parameters. All keys are flat so the struct maps
/// directly onto a key-value config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_users: usize,
    pub seed: u64,
    pub horizon: usize,
    pub step_minutes: u32,
    /// Fraction of users owning an EV.
    pub ev_share: f64,
    /// EV charger apparent power, kVA.
    pub ev_power_kva: f64,
    pub ev_phase_policy: EvPhasePolicy,
    /// Mean session start (hours) and spread of the main evening component.
    pub ev_start_mean_h: f64,
    pub ev_start_sd_h: f64,
    /// Late component of the start-time mixture and its weight.
    pub ev_late_mean_h: f64,
    pub ev_late_sd_h: f64,
    pub ev_late_weight: f64,
    /// Session duration range, hours.
    pub ev_min_duration_h: f64,
    pub ev_max_duration_h: f64,
    /// Fraction of users connected on all three phases.
    pub three_phase_share: f64,
    /// Band for each user's daily active-power peak, kW.
    pub peak_kw_min: f64,
    pub peak_kw_max: f64,
    pub power_factor: f64,
    /// Guaranteed power of every user, kW.
    pub p_gtd_kw: f64,
    pub congestion_target: CongestionRule,
    pub congestion_severity: f64,
    /// Limit tightening (voltage p.u. and thermal fraction) under which the
    /// all-guaranteed state must stay feasible in the linear model.
    pub reserve_margin: f64,
    pub base_voltage_v: f64,
    pub base_power_va: f64,
    /// Trunk cable per-phase resistance and reactance, ohm/km; rating, A.
    pub trunk_r_ohm_km: f64,
    pub trunk_x_ohm_km: f64,
    pub trunk_ampacity: f64,
    pub trunk_min_m: f64,
    pub trunk_max_m: f64,
    /// Service cable data, as for the trunk.
    pub service_r_ohm_km: f64,
    pub service_x_ohm_km: f64,
    pub service_ampacity: f64,
    pub service_min_m: f64,
    pub service_max_m: f64,
    /// Mutual impedance as a fraction of the self impedance on three-phase
    /// branches.
    pub mutual_ratio: f64,
    /// Probability that a trunk node branches off an earlier node instead of
    /// extending the previous one.
    pub branching: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n_users: 30,
            seed: 1,
            horizon: 96,
            step_minutes: 15,
            ev_share: 0.3,
            ev_power_kva: 3.3,
            ev_phase_policy: EvPhasePolicy::Attachment,
            ev_start_mean_h: 18.0,
            ev_start_sd_h: 1.25,
            ev_late_mean_h: 21.0,
            ev_late_sd_h: 2.0,
            ev_late_weight: 0.3,
            ev_min_duration_h: 2.0,
            ev_max_duration_h: 6.0,
            three_phase_share: 0.25,
            peak_kw_min: 2.0,
            peak_kw_max: 5.0,
            power_factor: 0.95,
            p_gtd_kw: 2.0,
            congestion_target: CongestionRule::Rescale,
            congestion_severity: 1.2,
            reserve_margin: 0.03,
            base_voltage_v: 230.0,
            base_power_va: 100_000.0,
            trunk_r_ohm_km: 0.320,
            trunk_x_ohm_km: 0.075,
            trunk_ampacity: 200.0,
            trunk_min_m: 25.0,
            trunk_max_m: 60.0,
            service_r_ohm_km: 1.83,
            service_x_ohm_km: 0.09,
            service_ampacity: 63.0,
            service_min_m: 8.0,
            service_max_m: 30.0,
            mutual_ratio: 0.25,
            branching: 0.25,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Params(m.to_string()));
        let fraction = |x: f64| (0.0..=1.0).contains(&x);
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if self.step_minutes == 0 || self.horizon == 0 {
            return bad("horizon and step_minutes must be positive");
        }
        if self.horizon * self.step_minutes as usize > 24 * 60 {
            return bad("horizon exceeds one day");
        }
        if !fraction(self.ev_share) {
            return bad("ev_share must lie in [0, 1]");
        }
        if !fraction(self.three_phase_share) || !fraction(self.ev_late_weight) || !fraction(self.branching) {
            return bad("shares and probabilities must lie in [0, 1]");
        }
        if !(self.ev_power_kva >= 0.0) {
            return bad("ev_power_kva must be nonnegative");
        }
        if !(self.ev_min_duration_h > 0.0 && self.ev_min_duration_h <= self.ev_max_duration_h) {
            return bad("EV duration range must be positive and ordered");
        }
        if !(self.ev_start_sd_h >= 0.0 && self.ev_late_sd_h >= 0.0) {
            return bad("EV start spreads must be nonnegative");
        }
        if !(0.0 <= self.peak_kw_min && self.peak_kw_min <= self.peak_kw_max) {
            return bad("peak band must satisfy 0 <= min <= max");
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return bad("power_factor must lie in (0, 1]");
        }
        if !(self.p_gtd_kw >= 0.0) {
            return bad("p_gtd_kw must be nonnegative");
        }
        if !(self.congestion_severity >= 1.0) {
            return bad("congestion_severity must be at least 1");
        }
        if !(0.0..1.0).contains(&self.reserve_margin) {
            return bad("reserve_margin must lie in [0, 1)");
        }
        if !(self.base_voltage_v > 0.0 && self.base_power_va > 0.0) {
            return bad("bases must be positive");
        }
        let cable_ok =
            |r: f64, x: f64, a: f64, lo: f64, hi: f64| r > 0.0 && x >= 0.0 && a > 0.0 && 0.0 < lo && lo <= hi;
        if !cable_ok(
            self.trunk_r_ohm_km,
            self.trunk_x_ohm_km,
            self.trunk_ampacity,
            self.trunk_min_m,
            self.trunk_max_m,
        ) || !cable_ok(
            self.service_r_ohm_km,
            self.service_x_ohm_km,
            self.service_ampacity,
            self.service_min_m,
            self.service_max_m,
        ) {
            return bad("cable data must be positive with ordered length ranges");
        }
        if !(0.0..1.0).contains(&self.mutual_ratio) {
            return bad("mutual_ratio must lie in [0, 1)");
        }
        Ok(())
    }

    /// `tan(acos(pf))`.
    pub fn q_ratio(&self) -> f64 {
        self.power_factor.acos().tan()
    }
}
