//! JSON policy snapshots and the read-only expert built from them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Agent, AgentConfig, AgentKind, Discretization, PpoShape, ReinforceAgent};
use crate::env::{ActionTable, Observation};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub version: u32,
    pub agent_kind: AgentKind,
    pub action_table_hash: String,
    pub discretization: Option<Discretization>,
    pub parameters: Vec<f64>,
}

impl PolicySnapshot {
    pub fn from_agent(agent: &Agent, table: &ActionTable) -> Self {
        let discretization = match agent {
            Agent::Qlearn(q) => Some(q.discretization()),
            _ => None,
        };
        PolicySnapshot {
            version: SNAPSHOT_VERSION,
            agent_kind: agent.kind(),
            action_table_hash: table.fingerprint(),
            discretization,
            parameters: agent.parameters().to_vec(),
        }
    }

    /// Checks version and action-table compatibility.
    pub fn check_compatible(&self, table: &ActionTable) -> Result<()> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::IncompatibleSnapshot(format!(
                "snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
                self.version
            )));
        }
        let expected = table.fingerprint();
        if self.action_table_hash != expected {
            return Err(Error::IncompatibleSnapshot(format!(
                "action table hash {} does not match environment {expected}",
                self.action_table_hash
            )));
        }
        Ok(())
    }

    /// SHA-256 of the serialized snapshot, for read-only checks.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("snapshot serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Rebuilds an agent holding these parameters. Hyperparameters other than
    /// the architecture come from `config`, whose kind must match.
    pub fn to_agent(&self, table: &ActionTable, config: &AgentConfig, seed: u64) -> Result<Agent> {
        self.check_compatible(table)?;
        if config.kind != self.agent_kind {
            return Err(Error::IncompatibleSnapshot(format!(
                "snapshot holds a {} policy, config asks for {}",
                self.agent_kind, config.kind
            )));
        }
        let slices = table.num_slices();
        let actions = table.len();
        let mismatch = || {
            Error::IncompatibleSnapshot(format!(
                "{} parameters do not fit a {} agent over {slices} slices and {actions} actions",
                self.parameters.len(),
                self.agent_kind
            ))
        };
        let mut config = config.clone();
        match self.agent_kind {
            AgentKind::Qlearn => {
                let disc = self.discretization.ok_or_else(|| {
                    Error::IncompatibleSnapshot("tabular snapshot lacks a discretization".into())
                })?;
                if disc != Discretization::new(slices) {
                    return Err(Error::IncompatibleSnapshot(format!(
                        "unsupported discretization {disc:?}"
                    )));
                }
            }
            AgentKind::Reinforce => {
                if self.parameters.len() != ReinforceAgent::param_count(slices, actions) {
                    return Err(mismatch());
                }
            }
            AgentKind::Ppo => {
                let shape = PpoShape::from_param_count(slices, actions, self.parameters.len())
                    .ok_or_else(mismatch)?;
                config.hidden_width = shape.hidden;
            }
        }
        let agent = Agent::new(&config, slices, actions, seed)?;
        Ok(match agent {
            Agent::Qlearn(q) => {
                Agent::Qlearn(q.with_table(self.parameters.clone()).ok_or_else(mismatch)?)
            }
            Agent::Reinforce(mut r) => {
                r.set_params(self.parameters.clone())?;
                Agent::Reinforce(r)
            }
            Agent::Ppo(mut p) => {
                p.set_params(self.parameters.clone())?;
                Agent::Ppo(p)
            }
        })
    }
}

pub fn save_policy(agent: &Agent, table: &ActionTable, path: &Path) -> Result<PolicySnapshot> {
    let snapshot = PolicySnapshot::from_agent(agent, table);
    let json = serde_json::to_string_pretty(&snapshot).map_err(|e| Error::parse(path, e))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(snapshot)
}

/// Reads a snapshot and rejects unknown versions.
pub fn load_policy(path: &Path) -> Result<PolicySnapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let snapshot: PolicySnapshot =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    if snapshot.version != SNAPSHOT_VERSION {
        return Err(Error::IncompatibleSnapshot(format!(
            "{}: snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
            path.display(),
            snapshot.version
        )));
    }
    Ok(snapshot)
}

/// A frozen policy that recommends greedy actions.
#[derive(Debug, Clone)]
pub struct ExpertPolicy {
    agent: Agent,
    fractions: Vec<Vec<f64>>,
    snapshot_hash: String,
}

impl ExpertPolicy {
    pub fn from_snapshot(snapshot: &PolicySnapshot, table: &ActionTable) -> Result<Self> {
        let agent = snapshot.to_agent(table, &AgentConfig::new(snapshot.agent_kind), 0)?;
        Ok(ExpertPolicy {
            agent,
            fractions: table.actions().iter().map(|a| a.fractions()).collect(),
            snapshot_hash: snapshot.content_hash(),
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.agent.kind()
    }

    /// Greedy action and its allocation fractions.
    pub fn greedy_action(&self, obs: &Observation) -> (usize, Vec<f64>) {
        let a = self.agent.greedy_action(obs);
        (a, self.fractions[a].clone())
    }

    /// Allocation fractions of every action, in table order.
    pub fn action_fractions(&self) -> &[Vec<f64>] {
        &self.fractions
    }

    /// Hash of the snapshot this expert was loaded from.
    pub fn snapshot_hash(&self) -> &str {
        &self.snapshot_hash
    }

    /// Hash of the parameters currently held; equal to
    /// [`snapshot_hash`](Self::snapshot_hash) as long as nothing mutated them.
    pub fn current_hash(&self, table: &ActionTable) -> String {
        PolicySnapshot::from_agent(&self.agent, table).content_hash()
    }
}
