//! Expert-guided exploration for a learner agent: policy reuse, policy
//! distillation and a hybrid that hands control over gradually.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentKind, ExpertPolicy};
use crate::env::Observation;
use crate::error::{Error, Result};

pub const DEFAULT_REUSE_HORIZON: usize = 500;
pub const DEFAULT_DISTILL_HORIZON: usize = 1000;
pub const DEFAULT_HYBRID_HORIZON: usize = 700;
pub const DEFAULT_DISTILL_LR: f64 = 1.0;

/// RNG stream for the transfer coin flips, kept apart from the learner's so
/// that a zero transfer rate leaves the learner's random draws untouched.
pub const TRANSFER_RNG_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransferScheme {
    #[default]
    None,
    Reuse,
    Distill,
    Hybrid,
}

impl TransferScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            TransferScheme::None => "none",
            TransferScheme::Reuse => "reuse",
            TransferScheme::Distill => "distill",
            TransferScheme::Hybrid => "hybrid",
        }
    }

    pub fn needs_expert(self) -> bool {
        self != TransferScheme::None
    }

    /// Whether the scheme trains the learner towards the expert's allocation.
    pub fn distills(self) -> bool {
        matches!(self, TransferScheme::Distill | TransferScheme::Hybrid)
    }
}

impl fmt::Display for TransferScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_reuse() -> usize {
    DEFAULT_REUSE_HORIZON
}
fn default_distill() -> usize {
    DEFAULT_DISTILL_HORIZON
}
fn default_hybrid() -> usize {
    DEFAULT_HYBRID_HORIZON
}
fn default_theta() -> f64 {
    1.0
}
fn default_distill_lr() -> f64 {
    DEFAULT_DISTILL_LR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default)]
    pub scheme: TransferScheme,
    #[serde(default = "default_reuse")]
    pub reuse_horizon: usize,
    #[serde(default = "default_distill")]
    pub distill_horizon: usize,
    #[serde(default = "default_hybrid")]
    pub hybrid_horizon: usize,
    /// Probability of executing the expert's action during guided steps.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_distill_lr")]
    pub distill_lr: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self::new(TransferScheme::None)
    }
}

impl TransferConfig {
    pub fn new(scheme: TransferScheme) -> Self {
        TransferConfig {
            scheme,
            reuse_horizon: DEFAULT_REUSE_HORIZON,
            distill_horizon: DEFAULT_DISTILL_HORIZON,
            hybrid_horizon: DEFAULT_HYBRID_HORIZON,
            theta: 1.0,
            distill_lr: DEFAULT_DISTILL_LR,
        }
    }

    /// Number of guided steps for the configured scheme.
    pub fn horizon(&self) -> usize {
        match self.scheme {
            TransferScheme::None => 0,
            TransferScheme::Reuse => self.reuse_horizon,
            TransferScheme::Distill => self.distill_horizon,
            TransferScheme::Hybrid => self.hybrid_horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.distill_lr > 0.0 && self.distill_lr.is_finite()) {
            return Err(Error::Config(format!(
                "distill_lr must be positive, got {}",
                self.distill_lr
            )));
        }
        Ok(())
    }
}

/// Expert-following probability of the hybrid scheme: linear from 1 at step
/// 0 to 0 at `horizon`.
pub fn hybrid_beta(step: usize, horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    (1.0 - step as f64 / horizon as f64).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Guided,
    Autonomous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferState {
    pub step: usize,
    pub phase: Phase,
    /// Distillation loss of every guided step that applied one.
    pub distill_losses: Vec<f64>,
}

/// Who chose the executed action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    Expert,
    Learner,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub source: ActionSource,
    pub distill_loss: Option<f64>,
}

/// Wraps a learner's action selection with one transfer scheme.
#[derive(Debug, Clone)]
pub struct TransferController {
    config: TransferConfig,
    expert: Option<ExpertPolicy>,
    state: TransferState,
    rng: ChaCha8Rng,
}

impl TransferController {
    pub fn new(
        config: TransferConfig,
        expert: Option<ExpertPolicy>,
        learner_kind: AgentKind,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if config.scheme.needs_expert() && expert.is_none() {
            return Err(Error::Config(format!(
                "transfer scheme {} requires an expert snapshot",
                config.scheme
            )));
        }
        if config.scheme.distills() && !learner_kind.is_policy_gradient() {
            return Err(Error::UnsupportedScheme(format!(
                "{} needs a differentiable learner, got {learner_kind}",
                config.scheme
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TRANSFER_RNG_STREAM);
        let phase = if config.horizon() > 0 {
            Phase::Guided
        } else {
            Phase::Autonomous
        };
        Ok(TransferController {
            config,
            expert,
            state: TransferState {
                step: 0,
                phase,
                distill_losses: Vec::new(),
            },
            rng,
        })
    }

    pub fn config(&self) -> &TransferConfig {
        &self.config
    }

    pub fn state(&self) -> &TransferState {
        &self.state
    }

    pub fn expert(&self) -> Option<&ExpertPolicy> {
        self.expert.as_ref()
    }

    pub fn phase_at(&self, step: usize) -> Phase {
        if step < self.config.horizon() {
            Phase::Guided
        } else {
            Phase::Autonomous
        }
    }

    /// Chooses the action to execute at `step`, applying any distillation
    /// update on the way.
    pub fn select(&mut self, learner: &mut Agent, obs: &Observation, step: usize) -> Decision {
        let decision = match self.config.scheme {
            TransferScheme::None => own(learner, obs, step),
            TransferScheme::Reuse => self.reuse_select(learner, obs, step),
            TransferScheme::Distill => self.distill_step(learner, obs, step),
            TransferScheme::Hybrid => self.hybrid_select(learner, obs, step),
        };
        if let Some(loss) = decision.distill_loss {
            self.state.distill_losses.push(loss);
        }
        self.state.step = step + 1;
        self.state.phase = self.phase_at(step + 1);
        decision
    }

    fn expert_action(&self, obs: &Observation) -> (usize, Vec<f64>) {
        self.expert
            .as_ref()
            .expect("checked at construction")
            .greedy_action(obs)
    }

    /// Expert with probability theta during the first `reuse_horizon` steps.
    pub fn reuse_select(
        &mut self,
        learner: &mut Agent,
        obs: &Observation,
        step: usize,
    ) -> Decision {
        if step < self.config.reuse_horizon && self.rng.random::<f64>() < self.config.theta {
            return expert_decision(self.expert_action(obs).0, None);
        }
        own(learner, obs, step)
    }

    /// Executes the expert action (with probability theta) and pulls the
    /// learner's expected allocation towards the expert's during the first
    /// `distill_horizon` steps.
    pub fn distill_step(
        &mut self,
        learner: &mut Agent,
        obs: &Observation,
        step: usize,
    ) -> Decision {
        if step >= self.config.distill_horizon {
            return own(learner, obs, step);
        }
        let (expert_action, target) = self.expert_action(obs);
        let loss = self.distill(learner, obs, &target);
        if self.rng.random::<f64>() < self.config.theta {
            expert_decision(expert_action, loss)
        } else {
            Decision {
                distill_loss: loss,
                ..own(learner, obs, step)
            }
        }
    }

    /// Expert with probability `theta * beta(step)`, otherwise the learner's
    /// own (continually distilled) policy.
    pub fn hybrid_select(
        &mut self,
        learner: &mut Agent,
        obs: &Observation,
        step: usize,
    ) -> Decision {
        let horizon = self.config.hybrid_horizon;
        if step >= horizon {
            return own(learner, obs, step);
        }
        let (expert_action, target) = self.expert_action(obs);
        let loss = self.distill(learner, obs, &target);
        let follow = self.config.theta * hybrid_beta(step, horizon);
        if self.rng.random::<f64>() < follow {
            expert_decision(expert_action, loss)
        } else {
            Decision {
                distill_loss: loss,
                ..own(learner, obs, step)
            }
        }
    }

    fn distill(&self, learner: &mut Agent, obs: &Observation, target: &[f64]) -> Option<f64> {
        let fractions = self
            .expert
            .as_ref()
            .expect("checked at construction")
            .action_fractions();
        learner.distill(obs, fractions, target, self.config.distill_lr)
    }
}

fn own(learner: &mut Agent, obs: &Observation, step: usize) -> Decision {
    Decision {
        action: learner.select_action(obs, step),
        source: ActionSource::Learner,
        distill_loss: None,
    }
}

fn expert_decision(action: usize, distill_loss: Option<f64>) -> Decision {
    Decision {
        action,
        source: ActionSource::Expert,
        distill_loss,
    }
}

/// Squared Euclidean distance between two allocation-fraction vectors.
pub fn allocation_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
