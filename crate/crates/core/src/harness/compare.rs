//! Paired comparison of run groups across seeds.

use std::collections::BTreeMap;

use serde::Serialize;

use super::run::RunSummary;
use super::stats::{mean, sign_test_p, std_dev};
use crate::error::{Error, Result};

/// A metric reported per group, with the direction that counts as better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[serde(rename = "first_200_mean_reward")]
    First200MeanReward,
    ConvergenceStep,
    DropCount,
    FinalSmoothedReward,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::First200MeanReward,
        Metric::ConvergenceStep,
        Metric::DropCount,
        Metric::FinalSmoothedReward,
    ];

    pub fn higher_is_better(self) -> bool {
        matches!(
            self,
            Metric::First200MeanReward | Metric::FinalSmoothedReward
        )
    }

    /// Unconverged runs count as converging one step after the end.
    pub fn value(self, s: &RunSummary) -> f64 {
        match self {
            Metric::First200MeanReward => s.first_200_mean_reward,
            Metric::ConvergenceStep => s.convergence_step.unwrap_or(s.total_steps) as f64,
            Metric::DropCount => s.drop_count as f64,
            Metric::FinalSmoothedReward => s.final_smoothed_reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub label: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<Metric, MetricStats>,
}

/// One-sided test that `better` beats `worse` on `metric`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseTest {
    pub better: String,
    pub worse: String,
    pub metric: Metric,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Mean over seeds of `value(better) - value(worse)`.
    pub mean_difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub groups: Vec<GroupReport>,
    pub tests: Vec<PairwiseTest>,
}

/// Summaries of one group keyed by seed.
fn by_seed(label: &str, runs: &[RunSummary]) -> Result<BTreeMap<u64, RunSummary>> {
    let mut map = BTreeMap::new();
    for r in runs {
        if map.insert(r.seed, r.clone()).is_some() {
            return Err(Error::Config(format!(
                "group {label} has seed {} twice",
                r.seed
            )));
        }
    }
    Ok(map)
}

/// Per-group statistics and one-sided sign tests in both directions for every
/// pair of groups. All groups must cover exactly the same seeds.
pub fn compare_runs(groups: &[(String, Vec<RunSummary>)]) -> Result<ComparisonReport> {
    if groups.len() < 2 {
        return Err(Error::Config("comparison needs at least two groups".into()));
    }
    let keyed = groups
        .iter()
        .map(|(label, runs)| by_seed(label, runs).map(|m| (label.clone(), m)))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = keyed[0].1.keys().copied().collect();
    if seeds.is_empty() {
        return Err(Error::Config(format!("group {} is empty", keyed[0].0)));
    }
    for (label, runs) in &keyed[1..] {
        if !runs.keys().copied().eq(seeds.iter().copied()) {
            return Err(Error::Config(format!(
                "group {label} covers seeds {:?}, expected {seeds:?}",
                runs.keys().collect::<Vec<_>>()
            )));
        }
    }

    let reports = keyed
        .iter()
        .map(|(label, runs)| GroupReport {
            label: label.clone(),
            seeds: seeds.clone(),
            metrics: Metric::ALL
                .iter()
                .map(|&m| {
                    let per_seed: Vec<f64> = runs.values().map(|r| m.value(r)).collect();
                    let stats = MetricStats {
                        mean: mean(&per_seed),
                        std: std_dev(&per_seed),
                        per_seed,
                    };
                    (m, stats)
                })
                .collect(),
        })
        .collect();

    let mut tests = Vec::new();
    for (i, (a, runs_a)) in keyed.iter().enumerate() {
        for (j, (b, runs_b)) in keyed.iter().enumerate() {
            if i == j {
                continue;
            }
            for metric in Metric::ALL {
                tests.push(sign_test(a, runs_a, b, runs_b, metric));
            }
        }
    }
    Ok(ComparisonReport {
        groups: reports,
        tests,
    })
}

fn sign_test(
    a: &str,
    runs_a: &BTreeMap<u64, RunSummary>,
    b: &str,
    runs_b: &BTreeMap<u64, RunSummary>,
    metric: Metric,
) -> PairwiseTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    let mut diffs = Vec::new();
    for (seed, ra) in runs_a {
        let va = metric.value(ra);
        let vb = metric.value(&runs_b[seed]);
        diffs.push(va - vb);
        let better = if metric.higher_is_better() {
            va > vb
        } else {
            va < vb
        };
        if va == vb {
            ties += 1;
        } else if better {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    PairwiseTest {
        better: a.to_string(),
        worse: b.to_string(),
        metric,
        wins,
        losses,
        ties,
        mean_difference: mean(&diffs),
        p_value: sign_test_p(wins, wins + losses),
    }
}
