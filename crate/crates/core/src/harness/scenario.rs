//! Scenario construction: slice mixes, capacity and SLA calibration.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, LoadMeasure, RewardKind, RewardSpec, DEFAULT_SHAPING_BONUS};
use crate::error::{Error, Result};
use crate::ransim::{calibrate_capacity, BaseStation, SLOT_MS, WINDOW_SLOTS};
use crate::traffic::{DistSpec, ServiceClass, ServiceProfile, DEFAULT_UNFULFILLED_LIMIT};

pub const DEFAULT_TARGET_UTILIZATION: f64 = 0.25;
pub const CALIBRATION_WINDOWS: usize = 500;
pub const CALIBRATION_SEED: u64 = 0;
/// c2 as a multiple of the mean latency under hard slicing.
pub const C2_OVER_HARD_LATENCY: f64 = 1.5;
pub const C1_OVER_C2: f64 = 0.5;
pub const DEADLINE_OVER_C2: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Video, VoLTE, URLLC.
    Expert,
    /// VoLTE, VoLTE, URLLC: the URLLC slice keeps the expert's slice index.
    Learner,
    /// Slices listed explicitly in the config.
    Custom,
}

impl ScenarioKind {
    pub fn default_slices(self) -> Vec<SliceSpec> {
        match self {
            ScenarioKind::Expert => vec![
                SliceSpec::class(ServiceClass::Video, 0.2),
                SliceSpec::class(ServiceClass::Volte, 0.1),
                SliceSpec::class(ServiceClass::Urllc, 0.7),
            ],
            ScenarioKind::Learner => vec![
                SliceSpec::class(ServiceClass::Volte, 0.15),
                SliceSpec::class(ServiceClass::Volte, 0.15),
                SliceSpec::class(ServiceClass::Urllc, 0.7),
            ],
            ScenarioKind::Custom => Vec::new(),
        }
    }
}

pub fn default_users(class: ServiceClass) -> usize {
    match class {
        ServiceClass::Video => 10,
        ServiceClass::Volte => 10,
        ServiceClass::Urllc => 2,
    }
}

/// One slice as written in a config; every `None` falls back to the class default
/// or to calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub class: ServiceClass,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interarrival: Option<DistSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_size: Option<DistSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
}

impl SliceSpec {
    pub fn class(class: ServiceClass, weight: f64) -> Self {
        SliceSpec {
            class,
            weight,
            num_users: None,
            interarrival: None,
            packet_size: None,
            c1: None,
            c2: None,
            deadline: None,
        }
    }

    /// Profile with churn disabled and placeholder SLA values.
    fn uncalibrated_profile(&self, users_override: Option<usize>) -> ServiceProfile {
        let mut p = ServiceProfile::for_class(
            self.class,
            self.num_users
                .or(users_override)
                .unwrap_or_else(|| default_users(self.class)),
            1.0,
            2.0,
        );
        if let Some(d) = &self.interarrival {
            p.interarrival = d.clone();
        }
        if let Some(d) = &self.packet_size {
            p.packet_size = d.clone();
        }
        p.deadline = f64::INFINITY;
        p
    }
}

/// Per-class user-count overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserOverrides {
    #[serde(default, rename = "Video", skip_serializing_if = "Option::is_none")]
    pub video: Option<usize>,
    #[serde(default, rename = "VoLTE", skip_serializing_if = "Option::is_none")]
    pub volte: Option<usize>,
    #[serde(default, rename = "URLLC", skip_serializing_if = "Option::is_none")]
    pub urllc: Option<usize>,
}

impl UserOverrides {
    fn get(&self, class: ServiceClass) -> Option<usize> {
        match class {
            ServiceClass::Video => self.video,
            ServiceClass::Volte => self.volte,
            ServiceClass::Urllc => self.urllc,
        }
    }
}

fn default_target_utilization() -> f64 {
    DEFAULT_TARGET_UTILIZATION
}
fn default_window_len() -> usize {
    WINDOW_SLOTS
}
fn default_shaping_bonus() -> f64 {
    DEFAULT_SHAPING_BONUS
}
fn default_calibration_windows() -> usize {
    CALIBRATION_WINDOWS
}
fn default_reward() -> RewardKind {
    RewardKind::Fn2
}

/// Everything needed to build an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Required for `custom`; replaces the defaults otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slices: Vec<SliceSpec>,
    #[serde(default)]
    pub users: UserOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_per_slot: Option<f64>,
    #[serde(default = "default_target_utilization")]
    pub target_utilization: f64,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default = "default_reward")]
    pub reward: RewardKind,
    #[serde(default = "default_shaping_bonus")]
    pub shaping_bonus: f64,
    #[serde(default)]
    pub load_measure: LoadMeasure,
    #[serde(default = "default_calibration_windows")]
    pub calibration_windows: usize,
    #[serde(default)]
    pub calibration_seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind) -> Self {
        ScenarioConfig {
            scenario,
            slices: Vec::new(),
            users: UserOverrides::default(),
            capacity_per_slot: None,
            target_utilization: DEFAULT_TARGET_UTILIZATION,
            window_len: WINDOW_SLOTS,
            reward: RewardKind::Fn2,
            shaping_bonus: DEFAULT_SHAPING_BONUS,
            load_measure: LoadMeasure::default(),
            calibration_windows: CALIBRATION_WINDOWS,
            calibration_seed: CALIBRATION_SEED,
        }
    }

    pub fn slice_specs(&self) -> Result<Vec<SliceSpec>> {
        let slices = if self.slices.is_empty() {
            self.scenario.default_slices()
        } else {
            self.slices.clone()
        };
        if slices.is_empty() {
            return Err(Error::Config("custom scenario lists no slices".into()));
        }
        Ok(slices)
    }

    pub fn slice_labels(&self) -> Result<Vec<String>> {
        Ok(self
            .slice_specs()?
            .iter()
            .map(|s| s.class.to_string())
            .collect())
    }

    /// Resolves capacity and SLA thresholds and assembles the environment config.
    pub fn build(&self) -> Result<Calibrated> {
        let specs = self.slice_specs()?;
        let mut profiles: Vec<ServiceProfile> = specs
            .iter()
            .map(|s| s.uncalibrated_profile(self.users.get(s.class)))
            .collect();
        let capacity = match self.capacity_per_slot {
            Some(c) => c,
            None => calibrate_capacity(&profiles, self.target_utilization, SLOT_MS)?,
        };

        let needs_sla = specs.iter().any(|s| s.c2.is_none());
        let hard_latency = if needs_sla {
            Some(hard_slicing_latency(
                &profiles,
                capacity,
                self.window_len,
                self.calibration_windows,
                self.calibration_seed,
            )?)
        } else {
            None
        };

        for (s, (spec, profile)) in specs.iter().zip(profiles.iter_mut()).enumerate() {
            let c2 = match spec.c2 {
                Some(c2) => c2,
                None => {
                    let l = hard_latency.as_ref().expect("calibrated")[s];
                    (C2_OVER_HARD_LATENCY * l).max(SLOT_MS)
                }
            };
            profile.sla_c2 = c2;
            profile.sla_c1 = spec.c1.unwrap_or(C1_OVER_C2 * c2);
            profile.deadline = spec.deadline.unwrap_or(DEADLINE_OVER_C2 * c2);
            profile.unfulfilled_limit = DEFAULT_UNFULFILLED_LIMIT;
        }

        let weights: Vec<f64> = specs.iter().map(|s| s.weight).collect();
        let reward = RewardSpec::for_profiles(self.reward, &profiles, weights)?
            .with_shaping_bonus(self.shaping_bonus)?;
        let env = EnvConfig {
            profiles,
            capacity_per_slot: capacity,
            window_len: self.window_len,
            reward,
            load_measure: self.load_measure,
        };
        env.validate()?;
        Ok(Calibrated { env, hard_latency })
    }
}

#[derive(Debug, Clone)]
pub struct Calibrated {
    pub env: EnvConfig,
    /// Mean per-slice latency under hard slicing, when SLA calibration ran.
    pub hard_latency: Option<Vec<f64>>,
}

/// Mean per-window latency of each slice under equal thirds, churn disabled.
pub fn hard_slicing_latency(
    profiles: &[ServiceProfile],
    capacity: f64,
    window_len: usize,
    windows: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if windows == 0 {
        return Err(Error::Config(
            "calibration needs at least one window".into(),
        ));
    }
    let mut quiet = profiles.to_vec();
    for p in &mut quiet {
        p.deadline = f64::INFINITY;
    }
    let n = quiet.len();
    let mut bs = BaseStation::new(quiet, capacity, seed)?.with_window_len(window_len)?;
    let share = vec![1.0 / n as f64; n];
    let mut sum = vec![0.0; n];
    for _ in 0..windows {
        let stats = bs.run_window(&share)?;
        for (acc, s) in sum.iter_mut().zip(&stats.slices) {
            *acc += s.avg_latency;
        }
    }
    Ok(sum.into_iter().map(|s| s / windows as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_slice_orders() {
        let labels = ScenarioConfig::new(ScenarioKind::Learner)
            .slice_labels()
            .unwrap();
        assert_eq!(labels, vec!["VoLTE", "VoLTE", "URLLC"]);
        let labels = ScenarioConfig::new(ScenarioKind::Expert)
            .slice_labels()
            .unwrap();
        assert_eq!(labels, vec!["Video", "VoLTE", "URLLC"]);
        assert!(ScenarioConfig::new(ScenarioKind::Custom).build().is_err());
    }

    #[test]
    fn calibration_sets_sla_relations() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Expert);
        cfg.calibration_windows = 50;
        let cal = cfg.build().unwrap();
        let hard = cal.hard_latency.unwrap();
        for (p, l) in cal.env.profiles.iter().zip(&hard) {
            assert!(p.sla_c2 >= C2_OVER_HARD_LATENCY * l - 1e-12);
            assert_eq!(p.sla_c1, 0.5 * p.sla_c2);
            assert_eq!(p.deadline, 2.0 * p.sla_c2);
        }
        assert_eq!(cal.env.reward.shaped_slice, Some(2));
    }

    #[test]
    fn explicit_sla_skips_calibration() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Custom);
        let mut s = SliceSpec::class(ServiceClass::Volte, 1.0);
        s.c1 = Some(1.0);
        s.c2 = Some(3.0);
        cfg.slices = vec![s];
        cfg.capacity_per_slot = Some(100.0);
        let cal = cfg.build().unwrap();
        assert!(cal.hard_latency.is_none());
        assert_eq!(cal.env.profiles[0].deadline, 6.0);
    }
}
