//! Slicing environment: observations, the discrete action grid, reward
//! functions and a gym-shaped `reset`/`step` loop over the simulator.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ransim::{BaseStation, WindowStats};
use crate::traffic::{ServiceClass, ServiceProfile};

/// Granularity of the allocation grid, in percent.
pub const GRID_STEP: u32 = 25;

/// One bandwidth split, in percent per slice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllocationAction {
    pub index: usize,
    pub percents: Vec<u32>,
}

impl AllocationAction {
    pub fn fractions(&self) -> Vec<f64> {
        self.percents.iter().map(|&p| p as f64 / 100.0).collect()
    }
}

/// All splits of 100% over the slices in steps of [`GRID_STEP`], in ascending
/// lexicographic order. Three slices give 15 actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTable {
    num_slices: usize,
    actions: Vec<AllocationAction>,
}

impl ActionTable {
    pub fn new(num_slices: usize) -> Self {
        assert!(num_slices >= 1, "action table needs at least one slice");
        let mut actions = Vec::new();
        let mut current = Vec::with_capacity(num_slices);
        compositions(100, num_slices, &mut current, &mut |parts| {
            actions.push(AllocationAction {
                index: actions.len(),
                percents: parts.to_vec(),
            });
        });
        ActionTable {
            num_slices,
            actions,
        }
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&AllocationAction> {
        self.actions.get(index)
    }

    pub fn actions(&self) -> &[AllocationAction] {
        &self.actions
    }

    pub fn index_of(&self, percents: &[u32]) -> Option<usize> {
        self.actions.iter().position(|a| a.percents == percents)
    }

    /// `sum_a probs[a] * fractions(a)`: the allocation a stochastic policy
    /// recommends on average.
    pub fn expected_fractions(&self, probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_slices];
        for (a, &p) in self.actions.iter().zip(probs) {
            for (o, &pct) in out.iter_mut().zip(&a.percents) {
                *o += p * pct as f64 / 100.0;
            }
        }
        out
    }

    /// Hex SHA-256 of the table contents; snapshots carry it so a policy is
    /// only loaded against the grid it was trained on.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("slices={};step={};", self.num_slices, GRID_STEP));
        for a in &self.actions {
            let row: Vec<String> = a.percents.iter().map(u32::to_string).collect();
            h.update(row.join(","));
            h.update(";");
        }
        hex::encode(h.finalize())
    }
}

fn compositions(
    remaining: u32,
    parts: usize,
    current: &mut Vec<u32>,
    emit: &mut impl FnMut(&[u32]),
) {
    if parts == 1 {
        current.push(remaining);
        emit(current);
        current.pop();
        return;
    }
    let mut first = 0;
    while first <= remaining {
        current.push(first);
        compositions(remaining - first, parts - 1, current, emit);
        current.pop();
        first += GRID_STEP;
    }
}

/// The 15-entry grid for three slices.
pub fn action_table() -> ActionTable {
    ActionTable::new(3)
}

/// Per-slice share of the traffic load in the last window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub load_ratios: Vec<f64>,
}

impl Observation {
    pub fn uniform(num_slices: usize) -> Self {
        Observation {
            load_ratios: vec![1.0 / num_slices as f64; num_slices],
        }
    }

    pub fn len(&self) -> usize {
        self.load_ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_ratios.is_empty()
    }
}

pub fn observation_from_loads(bytes_per_slice: &[f64]) -> Observation {
    let total: f64 = bytes_per_slice.iter().sum();
    if !(total > 0.0) {
        return Observation::uniform(bytes_per_slice.len());
    }
    Observation {
        load_ratios: bytes_per_slice.iter().map(|b| b / total).collect(),
    }
}

/// Logistic latency reward with `r(c1) = 0.95` and `r(c2) = 0.05`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlaCurve {
    pub c1: f64,
    pub c2: f64,
    midpoint: f64,
    steepness: f64,
}

impl SlaCurve {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 < c2) || !c1.is_finite() || !c2.is_finite() {
            return Err(Error::Config(format!(
                "sigmoid needs c1 < c2, got c1={c1} c2={c2}"
            )));
        }
        Ok(SlaCurve {
            c1,
            c2,
            midpoint: 0.5 * (c1 + c2),
            steepness: 2.0 * 19.0_f64.ln() / (c2 - c1),
        })
    }

    pub fn steepness(&self) -> f64 {
        self.steepness
    }

    pub fn reward(&self, latency: f64) -> f64 {
        1.0 / (1.0 + (self.steepness * (latency - self.midpoint)).exp())
    }
}

pub fn sigmoid_reward(latency: f64, c1: f64, c2: f64) -> Result<f64> {
    Ok(SlaCurve::new(c1, c2)?.reward(latency))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// Negated, c2-normalized weighted latency.
    Fn1,
    /// Weighted sigmoid of latency.
    Fn2,
    /// `Fn2` plus a bonus when the shaped slice meets its c2.
    Fn3,
}

pub const DEFAULT_SHAPING_BONUS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub weights: Vec<f64>,
    pub curves: Vec<SlaCurve>,
    pub shaping_bonus: f64,
    /// Slice whose c2 gates the shaping bonus (the URLLC slice).
    pub shaped_slice: Option<usize>,
}

impl RewardSpec {
    pub fn new(kind: RewardKind, weights: Vec<f64>, sla: &[(f64, f64)]) -> Result<Self> {
        let curves = sla
            .iter()
            .map(|&(c1, c2)| SlaCurve::new(c1, c2))
            .collect::<Result<Vec<_>>>()?;
        let spec = RewardSpec {
            kind,
            weights,
            curves,
            shaping_bonus: DEFAULT_SHAPING_BONUS,
            shaped_slice: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Weights and SLA thresholds taken from the slice profiles.
    pub fn for_profiles(
        kind: RewardKind,
        profiles: &[ServiceProfile],
        weights: Vec<f64>,
    ) -> Result<Self> {
        let sla: Vec<(f64, f64)> = profiles.iter().map(|p| (p.sla_c1, p.sla_c2)).collect();
        let mut spec = RewardSpec::new(kind, weights, &sla)?;
        spec.shaped_slice = profiles.iter().position(|p| p.class == ServiceClass::Urllc);
        Ok(spec)
    }

    pub fn with_shaping_bonus(mut self, bonus: f64) -> Result<Self> {
        self.shaping_bonus = bonus;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.curves.len() || self.weights.is_empty() {
            return Err(Error::Config(format!(
                "{} reward weights for {} SLA curves",
                self.weights.len(),
                self.curves.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config(format!(
                "reward weights must be positive: {:?}",
                self.weights
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("reward weights sum to {sum}, not 1")));
        }
        if !(self.shaping_bonus >= 0.0 && self.shaping_bonus.is_finite()) {
            return Err(Error::Config(format!(
                "shaping bonus must be >= 0, got {}",
                self.shaping_bonus
            )));
        }
        if self.shaped_slice.is_some_and(|s| s >= self.weights.len()) {
            return Err(Error::Config("shaped slice index out of range".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, latencies: &[f64]) -> f64 {
        match self.kind {
            RewardKind::Fn1 => -self
                .weights
                .iter()
                .zip(&self.curves)
                .zip(latencies)
                .map(|((w, c), l)| w * l / c.c2)
                .sum::<f64>(),
            RewardKind::Fn2 => self.sigmoid_sum(latencies),
            RewardKind::Fn3 => {
                let bonus = match self.shaped_slice {
                    Some(s) if latencies[s] <= self.curves[s].c2 => self.shaping_bonus,
                    _ => 0.0,
                };
                self.sigmoid_sum(latencies) + bonus
            }
        }
    }

    fn sigmoid_sum(&self, latencies: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.curves)
            .zip(latencies)
            .map(|((w, c), &l)| w * c.reward(l))
            .sum()
    }

    /// Largest reward a single window can earn.
    pub fn max_reward(&self) -> f64 {
        match self.kind {
            RewardKind::Fn1 => 0.0,
            RewardKind::Fn2 => self.weights.iter().sum(),
            RewardKind::Fn3 => {
                let bonus = if self.shaped_slice.is_some() {
                    self.shaping_bonus
                } else {
                    0.0
                };
                self.weights.iter().sum::<f64>() + bonus
            }
        }
    }

    /// Same weights and curves under a different reward function.
    pub fn with_kind(&self, kind: RewardKind) -> RewardSpec {
        RewardSpec {
            kind,
            ..self.clone()
        }
    }
}

pub fn compute_reward(spec: &RewardSpec, stats: &WindowStats) -> f64 {
    spec.evaluate(&stats.latencies())
}

/// Which byte count per slice forms the observation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMeasure {
    /// Bytes that arrived during the window.
    Arrived,
    /// Backlog at window start plus bytes that arrived during it.
    #[default]
    Offered,
}

impl LoadMeasure {
    pub fn loads(self, stats: &WindowStats) -> Vec<f64> {
        stats
            .slices
            .iter()
            .map(|s| match self {
                LoadMeasure::Arrived => s.bytes_arrived,
                LoadMeasure::Offered => s.bytes_offered,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub profiles: Vec<ServiceProfile>,
    pub capacity_per_slot: f64,
    pub window_len: usize,
    pub reward: RewardSpec,
    pub load_measure: LoadMeasure,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if self.profiles.len() != self.reward.weights.len() {
            return Err(Error::Config(format!(
                "{} slices but {} reward weights",
                self.profiles.len(),
                self.reward.weights.len()
            )));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepInfo {
    pub latencies: Vec<f64>,
    pub violations: Vec<usize>,
    pub churn: usize,
    pub allocation: Vec<f64>,
    pub stats: WindowStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub info: StepInfo,
}

/// Gym-shaped environment contract.
pub trait Environment {
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    fn num_actions(&self) -> usize;
}

/// One decision = one slicing window.
#[derive(Debug, Clone)]
pub struct SlicingEnv {
    config: EnvConfig,
    table: ActionTable,
    station: Option<BaseStation>,
}

impl SlicingEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let table = ActionTable::new(config.profiles.len());
        Ok(SlicingEnv {
            config,
            table,
            station: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_table(&self) -> &ActionTable {
        &self.table
    }

    pub fn station(&self) -> Option<&BaseStation> {
        self.station.as_ref()
    }

    /// Applies an arbitrary allocation (used by the static baselines).
    pub fn step_allocation(&mut self, fractions: &[f64]) -> Result<StepResult> {
        let station = self
            .station
            .as_mut()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        let stats = station.run_window(fractions)?;
        let observation = observation_from_loads(&self.config.load_measure.loads(&stats));
        let reward = compute_reward(&self.config.reward, &stats);
        let info = StepInfo {
            latencies: stats.latencies(),
            violations: stats.slices.iter().map(|s| s.deadline_violations).collect(),
            churn: stats.churn(),
            allocation: fractions.to_vec(),
            stats,
        };
        Ok(StepResult {
            observation,
            reward,
            info,
        })
    }
}

impl Environment for SlicingEnv {
    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let station = BaseStation::new(
            self.config.profiles.clone(),
            self.config.capacity_per_slot,
            seed,
        )?
        .with_window_len(self.config.window_len)?;
        self.station = Some(station);
        let n = self.config.profiles.len();
        let warmup = self.step_allocation(&vec![1.0 / n as f64; n])?;
        Ok(warmup.observation)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        let fractions = self
            .table
            .get(action)
            .ok_or_else(|| {
                Error::Usage(format!("action {action} outside 0..{}", self.table.len()))
            })?
            .fractions();
        self.step_allocation(&fractions)
    }

    fn num_actions(&self) -> usize {
        self.table.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Equal thirds.
    Hard,
    /// Static split equal to the slice reward weights.
    Fixed,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Hard => "hard",
            BaselineKind::Fixed => "fixed",
        }
    }
}

/// Static allocation for a baseline comparator; `weights` are the scenario's
/// per-slice reward weights (URLLC 0.7, Video 0.2, VoLTE 0.1 for the expert mix).
pub fn baseline_policy(kind: BaselineKind, weights: &[f64]) -> Vec<f64> {
    match kind {
        BaselineKind::Hard => vec![1.0 / weights.len() as f64; weights.len()],
        BaselineKind::Fixed => weights.to_vec(),
    }
}
