//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ranslice::agents::ppo::{PpoAgent, PpoHyper, PpoSample, PpoShape};
use ranslice::agents::{AgentKind, PgStep, PolicySnapshot, ReinforceAgent};
use ranslice::env::{action_table, Observation};
use ranslice::harness::{PreparedRun, RunConfig, ScenarioKind};
use ranslice::ransim::BaseStation;
use ranslice::transfer::{TransferConfig, TransferScheme};

/// Random allocation on the simplex, sometimes with zero entries.
pub fn random_allocation(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if w.iter().all(|x| *x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Runs `windows` windows under random allocations and returns every
/// violated scheduler invariant: per-slot budget isolation, work
/// conservation inside a slice, completion timing, per-user FIFO order and
/// per-window byte conservation. Also returns the number of churn events.
pub fn check_scheduler(
    bs: &mut BaseStation,
    windows: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, usize) {
    let n = bs.slices.len();
    let cap = bs.capacity_per_slot;
    let slot = bs.slot_duration;
    let tol = 1e-9 * cap.max(1.0);
    let mut violations = Vec::new();
    let mut churn = 0;
    let mut last_arrival: HashMap<(usize, usize), f64> = HashMap::new();

    for w in 0..windows {
        let alloc = random_allocation(rng, n);
        let before = bs.backlog();
        let mut slot_served = vec![0.0; n];
        let stats = bs
            .run_window_with(&alloc, |o| {
                for s in 0..n {
                    slot_served[s] += o.served[s];
                    if (o.budgets[s] - alloc[s] * cap).abs() > tol {
                        violations.push(format!(
                            "window {w}: slice {s} budget {} != share",
                            o.budgets[s]
                        ));
                    }
                    if o.served[s] > o.budgets[s] + tol {
                        violations.push(format!(
                            "window {w}: slice {s} served {} over budget",
                            o.served[s]
                        ));
                    }
                    if o.served[s] < o.budgets[s] - tol && o.queued_after[s] > tol {
                        violations.push(format!("window {w}: slice {s} idled budget with a queue"));
                    }
                }
                for c in &o.completions {
                    let done = c.packet.completion_time.unwrap_or(f64::NAN);
                    if (done - (o.start_time + slot)).abs() > 1e-9 {
                        violations.push(format!("window {w}: completion stamped {done}"));
                    }
                    if c.packet.arrival_time > o.start_time + 1e-12 {
                        violations
                            .push(format!("window {w}: packet served before it was admitted"));
                    }
                    let key = (c.slice_id, c.user_id);
                    let prev = last_arrival.insert(key, c.packet.arrival_time);
                    if prev.is_some_and(|p| p > c.packet.arrival_time) {
                        violations.push(format!("window {w}: FIFO broken for {key:?}"));
                    }
                }
            })
            .expect("valid allocation");
        churn += stats.churn();
        let after = bs.backlog();
        for s in 0..n {
            let st = &stats.slices[s];
            let lhs = before[s] + st.bytes_arrived;
            let rhs = st.bytes_served + st.bytes_discarded + after[s];
            if (lhs - rhs).abs() > 1e-9 * lhs.max(1.0) {
                violations.push(format!("window {w}: slice {s} bytes {lhs} in vs {rhs} out"));
            }
            if (slot_served[s] - st.bytes_served).abs() > tol {
                violations.push(format!("window {w}: slice {s} slot totals disagree"));
            }
        }
    }
    (violations, churn)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Observation {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    Observation { load_ratios: v }
}

/// Small enough to stay clear of the clip kinks, large enough to keep
/// rounding noise well below the tolerance.
const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const FD_FLOOR: f64 = 1e-5;

/// Largest per-component relative error between `analytic` and the central
/// difference of `f` at `params`.
pub fn max_fd_error(params: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + FD_STEP;
        let up = f(&p);
        p[i] = params[i] - FD_STEP;
        let down = f(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        let scale = analytic[i].abs().max(fd.abs()).max(FD_FLOOR);
        worst = worst.max((analytic[i] - fd).abs() / scale);
    }
    worst
}

/// REINFORCE surrogate gradient check at one random point.
pub fn reinforce_fd_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = ReinforceAgent::new(3, 15, 0.1, 0.9, 20, ChaCha8Rng::seed_from_u64(seed));
    let params: Vec<f64> = (0..ReinforceAgent::param_count(3, 15))
        .map(|_| 2.0 * rng.random::<f64>() - 1.0)
        .collect();
    agent.set_params(params.clone()).unwrap();
    let steps: Vec<PgStep> = (0..20)
        .map(|_| PgStep {
            observation: random_simplex(&mut rng, 3),
            action: rng.random_range(0..15),
            reward: rng.random::<f64>(),
            log_prob_old: 0.0,
        })
        .collect();
    let adv: Vec<f64> = (0..20).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let g = agent.surrogate_grad(&params, &steps, &adv);
    max_fd_error(&params, &g, |p| agent.surrogate(p, &steps, &adv))
}

pub fn ppo_hyper() -> PpoHyper {
    PpoHyper {
        lr: 0.003,
        gamma: 0.9,
        clip: 0.2,
        epochs: 4,
        value_coef: 0.5,
        batch_size: 4,
        segment_len: 20,
    }
}

/// PPO loss gradient check at one random point. Old log-probabilities come
/// from a perturbed copy of the parameters so some ratios fall outside the
/// clip range.
pub fn ppo_fd_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = PpoShape {
        inputs: 3,
        hidden: 16,
        actions: 15,
    };
    let mut agent = PpoAgent::new(shape, ppo_hyper(), ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let params: Vec<f64> = (0..shape.param_count())
        .map(|_| 2.0 * rng.random::<f64>() - 1.0)
        .collect();
    let old: Vec<f64> = params
        .iter()
        .map(|p| p + 0.3 * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    agent.set_params(old).unwrap();
    let samples: Vec<PpoSample> = (0..32)
        .map(|_| {
            let obs = random_simplex(&mut rng, 3);
            let action = rng.random_range(0..15);
            PpoSample {
                log_prob_old: agent.log_prob(&obs, action),
                inputs: obs.load_ratios,
                action,
                advantage: 2.0 * rng.random::<f64>() - 1.0,
                target_return: 5.0 * rng.random::<f64>(),
            }
        })
        .collect();
    agent.set_params(params.clone()).unwrap();
    let g = agent.loss_grad(&params, &samples);
    max_fd_error(&params, &g, |p| agent.loss(p, &samples))
}

/// PPO expert trained in the expert scenario.
pub fn train_expert(steps: usize, seed: u64) -> PolicySnapshot {
    let mut config = RunConfig::new(ScenarioKind::Expert, AgentKind::Ppo);
    config.total_steps = Some(steps);
    let run = PreparedRun::new(&config).expect("expert config");
    let out = run.train(seed).expect("expert run");
    PolicySnapshot::from_agent(out.agent.as_ref().expect("agent"), &action_table())
}

/// PPO learner run in the learner scenario under `scheme`.
pub fn learner_run(scheme: TransferScheme, expert: &PolicySnapshot, steps: usize) -> PreparedRun {
    let mut config = RunConfig::new(ScenarioKind::Learner, AgentKind::Ppo);
    config.total_steps = Some(steps);
    config.transfer = TransferConfig::new(scheme);
    let env = config.env.build().expect("learner env").env;
    PreparedRun::with_parts(&config, env, Some(expert.clone())).expect("learner config")
}
