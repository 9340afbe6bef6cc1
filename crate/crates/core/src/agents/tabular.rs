//! Epsilon-greedy tabular Q-learning over a binned observation simplex.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::math::argmax;
use super::schedule::EpsilonSchedule;
use crate::env::Observation;

pub const BIN_WIDTH: f64 = 0.1;
pub const BIN_LEVELS: usize = 11;

/// Maps each load ratio to one of `levels` bins of width `bin_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub bin_width: f64,
    pub levels: usize,
    pub num_slices: usize,
}

impl Discretization {
    pub fn new(num_slices: usize) -> Self {
        Discretization {
            bin_width: BIN_WIDTH,
            levels: BIN_LEVELS,
            num_slices,
        }
    }

    pub fn bins(&self, obs: &Observation) -> Vec<usize> {
        obs.load_ratios
            .iter()
            .map(|p| {
                // The nudge keeps 0.3 / 0.1 = 2.9999999999999996 in bin 3.
                let b = (p / self.bin_width + 1e-9).floor();
                (b.max(0.0) as usize).min(self.levels - 1)
            })
            .collect()
    }

    pub fn state_id(&self, obs: &Observation) -> usize {
        self.bins(obs).iter().fold(0, |id, b| id * self.levels + b)
    }

    pub fn num_states(&self) -> usize {
        self.levels.pow(self.num_slices as u32)
    }
}

/// Bin id of a three-slice observation.
pub fn discretize(obs: &Observation) -> usize {
    Discretization::new(obs.len()).state_id(obs)
}

#[derive(Debug, Clone)]
pub struct QLearner {
    disc: Discretization,
    num_actions: usize,
    q: Vec<f64>,
    alpha: f64,
    gamma: f64,
    epsilon: EpsilonSchedule,
    rng: ChaCha8Rng,
}

impl QLearner {
    pub fn new(
        num_slices: usize,
        num_actions: usize,
        alpha: f64,
        gamma: f64,
        epsilon: EpsilonSchedule,
        initial_q: f64,
        rng: ChaCha8Rng,
    ) -> Self {
        let disc = Discretization::new(num_slices);
        QLearner {
            q: vec![initial_q; disc.num_states() * num_actions],
            disc,
            num_actions,
            alpha,
            gamma,
            epsilon,
            rng,
        }
    }

    pub(crate) fn with_table(mut self, q: Vec<f64>) -> Option<Self> {
        (q.len() == self.q.len()).then(|| {
            self.q = q;
            self
        })
    }

    pub fn discretization(&self) -> Discretization {
        self.disc
    }

    pub fn table(&self) -> &[f64] {
        &self.q
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        self.epsilon
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.q[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.q[state * self.num_actions + action] = value;
    }

    pub fn greedy_action(&self, obs: &Observation) -> usize {
        argmax(self.row(self.disc.state_id(obs)))
    }

    pub fn select_action(&mut self, obs: &Observation, step: usize) -> usize {
        let eps = self.epsilon.value(step);
        if self.rng.random::<f64>() < eps {
            self.rng.random_range(0..self.num_actions)
        } else {
            self.greedy_action(obs)
        }
    }

    /// One temporal-difference update on state ids.
    pub fn update(&mut self, state: usize, action: usize, reward: f64, next_state: usize) {
        let best_next = self
            .row(next_state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let idx = state * self.num_actions + action;
        let target = reward + self.gamma * best_next;
        self.q[idx] += self.alpha * (target - self.q[idx]);
    }

    pub fn observe(
        &mut self,
        obs: &Observation,
        action: usize,
        reward: f64,
        next_obs: &Observation,
    ) {
        let s = self.disc.state_id(obs);
        let s2 = self.disc.state_id(next_obs);
        self.update(s, action, reward, s2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn obs(v: &[f64]) -> Observation {
        Observation {
            load_ratios: v.to_vec(),
        }
    }

    fn learner(eps: f64) -> QLearner {
        QLearner::new(
            3,
            15,
            0.1,
            0.9,
            EpsilonSchedule::constant(eps),
            0.0,
            ChaCha8Rng::seed_from_u64(5),
        )
    }

    #[test]
    fn bins_of_simplex_points() {
        let d = Discretization::new(3);
        assert_eq!(d.bins(&obs(&[1.0 / 3.0; 3])), vec![3, 3, 3]);
        assert_eq!(d.bins(&obs(&[1.0, 0.0, 0.0])), vec![10, 0, 0]);
        assert_eq!(d.bins(&obs(&[0.3, 0.3, 0.4])), vec![3, 3, 4]);
        assert_eq!(discretize(&obs(&[1.0, 0.0, 0.0])), 10 * 121);
        assert_eq!(d.num_states(), 1331);
    }

    #[test]
    fn single_update_from_zero() {
        let mut q = learner(0.0);
        q.update(0, 4, 1.0, 1);
        assert!((q.row(0)[4] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_td_error_is_a_fixed_point() {
        let mut q = learner(0.0);
        q.set(1, 0, 2.0);
        q.set(0, 3, 1.0 + 0.9 * 2.0);
        q.update(0, 3, 1.0, 1);
        assert_eq!(q.row(0)[3], 2.8);
    }

    #[test]
    fn greedy_and_uniform_extremes() {
        let o = obs(&[0.5, 0.25, 0.25]);
        let mut greedy = learner(0.0);
        let s = greedy.disc.state_id(&o);
        greedy.set(s, 9, 1.0);
        assert!((0..100).all(|t| greedy.select_action(&o, t) == 9));
        assert_eq!(learner(0.0).greedy_action(&o), 0);

        let mut explore = learner(1.0);
        let n = 100_000;
        let mut counts = [0usize; 15];
        for t in 0..n {
            counts[explore.select_action(&o, t)] += 1;
        }
        let p = 1.0 / 15.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - n as f64 * p).abs() < 3.0 * sd + 1.0,
                "{counts:?}"
            );
        }
    }
}
