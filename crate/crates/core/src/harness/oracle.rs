//! Exhaustive evaluation of every static allocation.

use serde::Serialize;

use crate::agents::math::argmax;
use crate::env::{EnvConfig, Environment, SlicingEnv};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub best_action: usize,
    pub best_percents: Vec<u32>,
    /// Mean reward of each action held fixed, in action-table order.
    pub mean_rewards: Vec<f64>,
}

/// Mean reward of one action held fixed for `horizon` windows.
pub fn static_action_reward(
    env: &EnvConfig,
    action: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let mut env = SlicingEnv::new(env.clone())?;
    env.reset(seed)?;
    let mut total = 0.0;
    for _ in 0..horizon {
        total += env.step(action)?.reward;
    }
    Ok(total / horizon as f64)
}

/// Holds each action fixed for `horizon` windows from the same initial state
/// and seed, each in its own environment, and returns the best.
pub fn brute_force_static_oracle(
    env: &EnvConfig,
    horizon: usize,
    seed: u64,
) -> Result<OracleResult> {
    if horizon == 0 {
        return Err(Error::Config("oracle horizon must be at least 1".into()));
    }
    let table = SlicingEnv::new(env.clone())?.action_table().clone();
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..table.len())
            .map(|a| scope.spawn(move || static_action_reward(env, a, horizon, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("oracle thread panicked"))
            .collect()
    });
    let mean_rewards = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let best_action = argmax(&mean_rewards);
    Ok(OracleResult {
        best_action,
        best_percents: table.get(best_action).expect("in range").percents.clone(),
        mean_rewards,
    })
}
