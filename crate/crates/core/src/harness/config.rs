//! Run configuration as read from JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{ScenarioConfig, ScenarioKind};
use crate::agents::{AgentConfig, AgentKind, EpsilonSchedule};
use crate::env::BaselineKind;
use crate::error::{Error, Result};
use crate::transfer::TransferConfig;

pub const EXPERT_TOTAL_STEPS: usize = 50_000;
pub const LEARNER_TOTAL_STEPS: usize = 20_000;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 500;
/// Number of leading steps averaged for the early-reward metric.
pub const EARLY_STEPS: usize = 200;

fn default_agent() -> AgentConfig {
    AgentConfig::new(AgentKind::Ppo)
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_smoothing() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub env: ScenarioConfig,
    #[serde(default = "default_agent")]
    pub agent: AgentConfig,
    /// Runs a static baseline instead of a learning agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineKind>,
    #[serde(default)]
    pub transfer: TransferConfig,
    /// Expert policy snapshot; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_snapshot: Option<PathBuf>,
    /// Defaults to 50 000 for the expert scenario and 20 000 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_smoothing")]
    pub smoothing_window: usize,
    /// Write the trained policy next to the step log.
    #[serde(default)]
    pub save_policy: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(scenario: ScenarioKind, agent: AgentKind) -> Self {
        RunConfig {
            env: ScenarioConfig::new(scenario),
            agent: AgentConfig::new(agent),
            baseline: None,
            transfer: TransferConfig::default(),
            expert_snapshot: None,
            total_steps: None,
            seeds: default_seeds(),
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            save_policy: false,
            out_dir: default_out_dir(),
        }
    }

    /// Reads a config file, resolving a relative expert snapshot path
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if let (Some(snap), Some(dir)) = (&config.expert_snapshot, path.parent()) {
            if snap.is_relative() {
                config.expert_snapshot = Some(dir.join(snap));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn is_expert(&self) -> bool {
        self.env.scenario == ScenarioKind::Expert
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps.unwrap_or(if self.is_expert() {
            EXPERT_TOTAL_STEPS
        } else {
            LEARNER_TOTAL_STEPS
        })
    }

    /// Agent config with the role's default exploration filled in.
    pub fn agent_config(&self) -> AgentConfig {
        let mut agent = self.agent.clone();
        if agent.epsilon.is_none() {
            agent.epsilon = Some(if self.is_expert() {
                EpsilonSchedule::expert()
            } else {
                EpsilonSchedule::learner()
            });
        }
        agent
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps() == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.smoothing_window == 0 {
            return Err(Error::Config("smoothing_window must be at least 1".into()));
        }
        if self.baseline.is_some() && self.transfer.scheme.needs_expert() {
            return Err(Error::Config(
                "a static baseline cannot use a transfer scheme".into(),
            ));
        }
        if self.transfer.scheme.needs_expert() && self.expert_snapshot.is_none() {
            return Err(Error::Config(format!(
                "transfer scheme {} requires expert_snapshot",
                self.transfer.scheme
            )));
        }
        self.agent.validate()?;
        self.transfer.validate()
    }
}
