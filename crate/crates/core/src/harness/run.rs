//! Training loop, step logs and per-seed summaries.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, EARLY_STEPS};
use super::stats;
use crate::agents::{load_policy, save_policy, Agent, AgentConfig, ExpertPolicy, PolicySnapshot};
use crate::env::{baseline_policy, EnvConfig, Environment, Observation, SlicingEnv, StepResult};
use crate::error::{Error, Result};
use crate::transfer::{TransferController, TransferScheme};

/// One decision step as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLogRow {
    pub step: usize,
    /// `-1` for static baselines, which do not pick from the action table.
    pub action_index: i64,
    pub reward: f64,
    pub latencies: Vec<f64>,
    /// Fractions applied in the window (not written to the CSV).
    pub allocation: Vec<f64>,
    pub epsilon: f64,
    pub churn: usize,
    /// Simulated time at the end of the window, in microseconds.
    pub wallclock_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub slice_labels: Vec<String>,
    /// Agent kind, or `baseline-hard` / `baseline-fixed`.
    pub policy: String,
    pub transfer: TransferScheme,
    pub total_steps: usize,
    pub smoothing_window: usize,
    pub first_200_mean_reward: f64,
    pub final_smoothed_reward: f64,
    /// `None` when the smoothed curve never reached the threshold.
    pub convergence_step: Option<usize>,
    pub drop_count: usize,
    pub mean_reward: f64,
    pub final_quartile_mean_reward: f64,
    /// Learner's greedy action at the last observation.
    pub final_greedy_action: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<StepLogRow>,
    pub summary: RunSummary,
    pub agent: Option<Agent>,
    pub distill_losses: Vec<f64>,
}

/// A config with its environment calibrated and expert loaded, ready to run
/// any number of seeds.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub env: EnvConfig,
    pub slice_labels: Vec<String>,
    pub expert: Option<PolicySnapshot>,
}

impl PreparedRun {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env.build()?.env;
        let expert = match (
            &config.expert_snapshot,
            config.transfer.scheme.needs_expert(),
        ) {
            (Some(path), true) => Some(load_policy(path)?),
            _ => None,
        };
        Self::with_parts(config, env, expert)
    }

    /// Uses an already-built environment and in-memory expert.
    pub fn with_parts(
        config: &RunConfig,
        env: EnvConfig,
        expert: Option<PolicySnapshot>,
    ) -> Result<Self> {
        config.agent.validate()?;
        config.transfer.validate()?;
        if config.transfer.scheme.needs_expert() && expert.is_none() {
            return Err(Error::Config(format!(
                "transfer scheme {} requires an expert snapshot",
                config.transfer.scheme
            )));
        }
        Ok(PreparedRun {
            slice_labels: config.env.slice_labels()?,
            config: config.clone(),
            env,
            expert,
        })
    }

    pub fn train(&self, seed: u64) -> Result<RunOutput> {
        let config = &self.config;
        let mut env = SlicingEnv::new(self.env.clone())?;
        let table = env.action_table().clone();
        let total = config.total_steps();
        let mut obs = env.reset(seed)?;
        let mut rows = Vec::with_capacity(total);

        if let Some(kind) = config.baseline {
            let allocation = baseline_policy(kind, &self.env.reward.weights);
            for step in 0..total {
                let res = env.step_allocation(&allocation)?;
                rows.push(log_row(step, -1, 0.0, &res, &env));
            }
            let policy = format!("baseline-{}", kind.as_str());
            let summary = self.summarize(seed, policy, &rows, None);
            return Ok(RunOutput {
                rows,
                summary,
                agent: None,
                distill_losses: Vec::new(),
            });
        }

        let mut agent_config = config.agent_config();
        if agent_config.initial_q.is_none() {
            // Optimistic start: every untried action looks as good as the best possible return.
            agent_config.initial_q =
                Some(self.env.reward.max_reward() / (1.0 - agent_config.gamma));
        }
        let mut agent = Agent::new(&agent_config, table.num_slices(), table.len(), seed)?;
        let expert = match &self.expert {
            Some(snapshot) if config.transfer.scheme.needs_expert() => {
                Some(ExpertPolicy::from_snapshot(snapshot, &table)?)
            }
            _ => None,
        };
        let mut controller =
            TransferController::new(config.transfer.clone(), expert, agent_config.kind, seed)?;

        for step in 0..total {
            let decision = controller.select(&mut agent, &obs, step);
            let epsilon = agent.epsilon(step);
            let res = env.step(decision.action)?;
            agent.observe(&obs, decision.action, res.reward, &res.observation)?;
            rows.push(log_row(step, decision.action as i64, epsilon, &res, &env));
            obs = res.observation;
        }
        let summary = self.summarize(
            seed,
            agent.kind().to_string(),
            &rows,
            Some(agent.greedy_action(&obs)),
        );
        Ok(RunOutput {
            rows,
            summary,
            agent: Some(agent),
            distill_losses: controller.state().distill_losses.clone(),
        })
    }

    fn summarize(
        &self,
        seed: u64,
        policy: String,
        rows: &[StepLogRow],
        greedy: Option<usize>,
    ) -> RunSummary {
        let window = self.config.smoothing_window;
        let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
        let smoothed = stats::smooth(&rewards, window);
        RunSummary {
            seed,
            slice_labels: self.slice_labels.clone(),
            policy,
            transfer: if self.config.baseline.is_some() {
                TransferScheme::None
            } else {
                self.config.transfer.scheme
            },
            total_steps: rows.len(),
            smoothing_window: window,
            first_200_mean_reward: stats::early_mean(&rewards, EARLY_STEPS),
            final_smoothed_reward: smoothed.last().copied().unwrap_or(f64::NAN),
            convergence_step: stats::convergence_step(&rewards, window),
            drop_count: stats::drop_count(&smoothed, window),
            mean_reward: stats::mean(&rewards),
            final_quartile_mean_reward: stats::final_quartile_mean(&rewards),
            final_greedy_action: greedy,
        }
    }
}

fn log_row(
    step: usize,
    action_index: i64,
    epsilon: f64,
    res: &StepResult,
    env: &SlicingEnv,
) -> StepLogRow {
    let now_ms = env.station().map_or(0.0, |s| s.now());
    StepLogRow {
        step,
        action_index,
        reward: res.reward,
        latencies: res.info.latencies.clone(),
        allocation: res.info.allocation.clone(),
        epsilon,
        churn: res.info.churn,
        wallclock_us: (now_ms * 1000.0).round() as u64,
    }
}

/// Column names of the step log for `num_slices` slices.
pub fn csv_header(num_slices: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "action_index".into(), "reward".into()];
    h.extend((0..num_slices).map(|s| format!("lat_slice{s}_ms")));
    h.extend(["epsilon".to_string(), "churn".into(), "wallclock_us".into()]);
    h
}

pub fn write_step_log(path: &Path, rows: &[StepLogRow]) -> Result<()> {
    let slices = rows.first().map_or(3, |r| r.latencies.len());
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(csv_header(slices)).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.action_index.to_string(),
            r.reward.to_string(),
        ];
        rec.extend(r.latencies.iter().map(f64::to_string));
        rec.extend([
            r.epsilon.to_string(),
            r.churn.to_string(),
            r.wallclock_us.to_string(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Files written for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub steps_csv: PathBuf,
    pub summary_json: PathBuf,
    pub policy_json: Option<PathBuf>,
}

/// Writes `seed_<n>.csv`, `seed_<n>.summary.json` and optionally
/// `seed_<n>.policy.json` under `dir`.
pub fn write_outputs(
    dir: &Path,
    output: &RunOutput,
    env: &EnvConfig,
    save: bool,
) -> Result<RunFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let seed = output.summary.seed;
    let steps_csv = dir.join(format!("seed_{seed}.csv"));
    let summary_json = dir.join(format!("seed_{seed}.summary.json"));
    write_step_log(&steps_csv, &output.rows)?;
    write_json(&summary_json, &output.summary)?;
    let policy_json = match (&output.agent, save) {
        (Some(agent), true) => {
            let path = dir.join(format!("seed_{seed}.policy.json"));
            let table = SlicingEnv::new(env.clone())?.action_table().clone();
            save_policy(agent, &table, &path)?;
            Some(path)
        }
        _ => None,
    };
    Ok(RunFiles {
        steps_csv,
        summary_json,
        policy_json,
    })
}

/// Trains every configured seed (in parallel) and writes their outputs to
/// `out_dir` (or the config's own).
pub fn run_experiment(config: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<RunSummary>> {
    let prepared = PreparedRun::new(config)?;
    let dir = out_dir.map_or_else(|| config.out_dir.clone(), Path::to_path_buf);
    let results: Vec<Result<RunSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let prepared = &prepared;
                let dir = &dir;
                scope.spawn(move || {
                    let output = prepared.train(seed)?;
                    write_outputs(dir, &output, &prepared.env, prepared.config.save_policy)?;
                    Ok(output.summary)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// Mean reward of `agent` acting greedily for `windows` windows of a fresh
/// environment. The agent is not updated.
pub fn evaluate_greedy(agent: &Agent, env: &EnvConfig, seed: u64, windows: usize) -> Result<f64> {
    let mut env = SlicingEnv::new(env.clone())?;
    let mut obs: Observation = env.reset(seed)?;
    let mut total = 0.0;
    for _ in 0..windows {
        let res = env.step(agent.greedy_action(&obs))?;
        total += res.reward;
        obs = res.observation;
    }
    Ok(total / windows as f64)
}

/// Builds a fresh agent of `config` holding `snapshot`'s parameters.
pub fn restore_agent(
    snapshot: &PolicySnapshot,
    env: &EnvConfig,
    config: &AgentConfig,
    seed: u64,
) -> Result<Agent> {
    let table = SlicingEnv::new(env.clone())?.action_table().clone();
    snapshot.to_agent(&table, config, seed)
}
