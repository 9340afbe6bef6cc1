//! Learning agents over the discrete allocation action space.

pub mod math;
pub mod ppo;
pub mod reinforce;
pub mod schedule;
pub mod snapshot;
pub mod tabular;

use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ppo::{PpoAgent, PpoHyper, PpoShape};
pub use reinforce::ReinforceAgent;
pub use schedule::EpsilonSchedule;
pub use snapshot::{load_policy, save_policy, ExpertPolicy, PolicySnapshot};
pub use tabular::{discretize, Discretization, QLearner};

use crate::env::Observation;
use crate::error::{Error, Result};

/// RNG stream reserved for agent-internal sampling.
pub const AGENT_RNG_STREAM: u64 = u64::MAX - 1;

/// One policy-gradient step as recorded for the next update.
#[derive(Debug, Clone, PartialEq)]
pub struct PgStep {
    pub observation: Observation,
    pub action: usize,
    pub reward: f64,
    /// Log-probability of `action` under the policy at decision time.
    pub log_prob_old: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Qlearn,
    Reinforce,
    Ppo,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Qlearn => "qlearn",
            AgentKind::Reinforce => "reinforce",
            AgentKind::Ppo => "ppo",
        }
    }

    /// Whether the policy has a differentiable action preference.
    pub fn is_policy_gradient(self) -> bool {
        !matches!(self, AgentKind::Qlearn)
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            AgentKind::Qlearn => 0.1,
            AgentKind::Reinforce => 0.05,
            AgentKind::Ppo => 0.003,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_gamma() -> f64 {
    0.9
}
fn default_clip() -> f64 {
    0.2
}
fn default_hidden() -> usize {
    16
}
fn default_batch() -> usize {
    4
}
fn default_segment() -> usize {
    20
}
fn default_epochs() -> usize {
    4
}
fn default_value_coef() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Kind-specific default when absent.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "default_hidden")]
    pub hidden_width: usize,
    /// Q-learning exploration; the harness picks the expert or learner
    /// default when absent.
    #[serde(default)]
    pub epsilon: Option<EpsilonSchedule>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_segment")]
    pub segment_len: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_value_coef")]
    pub value_coef: f64,
    /// Initial value of every Q-table entry; the harness uses the
    /// discounted reward upper bound when absent, zero otherwise.
    #[serde(default)]
    pub initial_q: Option<f64>,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        AgentConfig {
            kind,
            learning_rate: None,
            gamma: default_gamma(),
            clip: default_clip(),
            hidden_width: default_hidden(),
            epsilon: None,
            batch_size: default_batch(),
            segment_len: default_segment(),
            epochs: default_epochs(),
            value_coef: default_value_coef(),
            initial_q: None,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| self.kind.default_learning_rate())
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        self.epsilon.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Config(format!(
                "clip must lie in (0, 1), got {}",
                self.clip
            )));
        }
        if self.hidden_width == 0 || self.segment_len == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "hidden width, segment length and epochs must be positive".into(),
            ));
        }
        if self.kind == AgentKind::Ppo
            && !(ppo::MIN_BATCH..=ppo::MAX_BATCH).contains(&self.batch_size)
        {
            return Err(Error::Config(format!(
                "PPO batch size must be in {}..={}, got {}",
                ppo::MIN_BATCH,
                ppo::MAX_BATCH,
                self.batch_size
            )));
        }
        if let Some(e) = self.epsilon {
            if !(0.0..=1.0).contains(&e.initial)
                || !(0.0..=1.0).contains(&e.floor)
                || !(0.0..=1.0).contains(&e.decay)
            {
                return Err(Error::Config(
                    "epsilon schedule values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    fn ppo_hyper(&self) -> PpoHyper {
        PpoHyper {
            lr: self.learning_rate(),
            gamma: self.gamma,
            clip: self.clip,
            epochs: self.epochs,
            value_coef: self.value_coef,
            batch_size: self.batch_size,
            segment_len: self.segment_len,
        }
    }
}

/// A single agent of any supported kind.
#[derive(Debug, Clone)]
pub enum Agent {
    Qlearn(QLearner),
    Reinforce(ReinforceAgent),
    Ppo(PpoAgent),
}

impl Agent {
    pub fn new(
        config: &AgentConfig,
        num_slices: usize,
        num_actions: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(AGENT_RNG_STREAM);
        Ok(match config.kind {
            AgentKind::Qlearn => Agent::Qlearn(QLearner::new(
                num_slices,
                num_actions,
                config.learning_rate(),
                config.gamma,
                config.epsilon_schedule(),
                config.initial_q.unwrap_or(0.0),
                rng,
            )),
            AgentKind::Reinforce => Agent::Reinforce(ReinforceAgent::new(
                num_slices,
                num_actions,
                config.learning_rate(),
                config.gamma,
                config.segment_len,
                rng,
            )),
            AgentKind::Ppo => {
                let shape = PpoShape {
                    inputs: num_slices,
                    hidden: config.hidden_width,
                    actions: num_actions,
                };
                Agent::Ppo(PpoAgent::new(shape, config.ppo_hyper(), rng)?)
            }
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Qlearn(_) => AgentKind::Qlearn,
            Agent::Reinforce(_) => AgentKind::Reinforce,
            Agent::Ppo(_) => AgentKind::Ppo,
        }
    }

    pub fn select_action(&mut self, obs: &Observation, step: usize) -> usize {
        match self {
            Agent::Qlearn(q) => q.select_action(obs, step),
            Agent::Reinforce(r) => r.select_action(obs),
            Agent::Ppo(p) => p.select_action(obs),
        }
    }

    pub fn greedy_action(&self, obs: &Observation) -> usize {
        match self {
            Agent::Qlearn(q) => q.greedy_action(obs),
            Agent::Reinforce(r) => r.greedy_action(obs),
            Agent::Ppo(p) => p.greedy_action(obs),
        }
    }

    /// Exploration rate in effect at `step`; zero for policy-gradient agents,
    /// which explore by sampling.
    pub fn epsilon(&self, step: usize) -> f64 {
        match self {
            Agent::Qlearn(q) => q.epsilon().value(step),
            _ => 0.0,
        }
    }

    /// Action distribution for policy-gradient agents.
    pub fn action_probs(&self, obs: &Observation) -> Option<Vec<f64>> {
        match self {
            Agent::Qlearn(_) => None,
            Agent::Reinforce(r) => Some(r.action_probs(obs)),
            Agent::Ppo(p) => Some(p.action_probs(obs)),
        }
    }

    /// Learns from one transition. Policy-gradient agents buffer it and
    /// update when their segment (and batch) fills.
    pub fn observe(
        &mut self,
        obs: &Observation,
        action: usize,
        reward: f64,
        next_obs: &Observation,
    ) -> Result<()> {
        match self {
            Agent::Qlearn(q) => {
                q.observe(obs, action, reward, next_obs);
                Ok(())
            }
            Agent::Reinforce(r) => {
                let log_prob_old = r.log_prob(obs, action);
                r.observe(PgStep {
                    observation: obs.clone(),
                    action,
                    reward,
                    log_prob_old,
                })
            }
            Agent::Ppo(p) => {
                let log_prob_old = p.log_prob(obs, action);
                p.observe(PgStep {
                    observation: obs.clone(),
                    action,
                    reward,
                    log_prob_old,
                })
            }
        }
    }

    /// One distillation step towards `target` fractions; `None` for agents
    /// without a differentiable policy.
    pub fn distill(
        &mut self,
        obs: &Observation,
        fractions: &[Vec<f64>],
        target: &[f64],
        lr: f64,
    ) -> Option<f64> {
        match self {
            Agent::Qlearn(_) => None,
            Agent::Reinforce(r) => Some(r.distill(obs, fractions, target, lr)),
            Agent::Ppo(p) => Some(p.distill(obs, fractions, target, lr)),
        }
    }

    /// Flat parameter vector (the Q-table for tabular agents).
    pub fn parameters(&self) -> &[f64] {
        match self {
            Agent::Qlearn(q) => q.table(),
            Agent::Reinforce(r) => r.params(),
            Agent::Ppo(p) => p.params(),
        }
    }
}
