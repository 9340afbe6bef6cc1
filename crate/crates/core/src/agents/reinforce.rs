//! REINFORCE with a linear softmax policy and a running-mean return baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::math::{
    argmax, discounted_returns, distill_logit_grad, log_softmax, sample_categorical, softmax,
};
use super::PgStep;
use crate::env::Observation;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReinforceAgent {
    num_inputs: usize,
    num_actions: usize,
    /// Row-major `num_actions x (num_inputs + 1)`; the last column is the bias.
    params: Vec<f64>,
    lr: f64,
    gamma: f64,
    segment_len: usize,
    baseline: f64,
    baseline_count: u64,
    segment: Vec<PgStep>,
    rng: ChaCha8Rng,
}

impl ReinforceAgent {
    pub fn new(
        num_inputs: usize,
        num_actions: usize,
        lr: f64,
        gamma: f64,
        segment_len: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        ReinforceAgent {
            num_inputs,
            num_actions,
            params: vec![0.0; num_actions * (num_inputs + 1)],
            lr,
            gamma,
            segment_len,
            baseline: 0.0,
            baseline_count: 0,
            segment: Vec::with_capacity(segment_len),
            rng,
        }
    }

    pub fn param_count(num_inputs: usize, num_actions: usize) -> usize {
        num_actions * (num_inputs + 1)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::IncompatibleSnapshot(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    fn logits_with(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let stride = self.num_inputs + 1;
        (0..self.num_actions)
            .map(|a| {
                let row = &params[a * stride..(a + 1) * stride];
                row[..self.num_inputs]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + row[self.num_inputs]
            })
            .collect()
    }

    pub fn logits(&self, obs: &Observation) -> Vec<f64> {
        self.logits_with(&self.params, &obs.load_ratios)
    }

    pub fn action_probs(&self, obs: &Observation) -> Vec<f64> {
        softmax(&self.logits(obs))
    }

    pub fn log_prob(&self, obs: &Observation, action: usize) -> f64 {
        log_softmax(&self.logits(obs))[action]
    }

    pub fn greedy_action(&self, obs: &Observation) -> usize {
        argmax(&self.logits(obs))
    }

    pub fn select_action(&mut self, obs: &Observation) -> usize {
        let probs = self.action_probs(obs);
        sample_categorical(&probs, self.rng.random::<f64>())
    }

    /// `sum_t advantage_t * log pi(a_t | s_t)` evaluated at `params`.
    pub fn surrogate(&self, params: &[f64], steps: &[PgStep], advantages: &[f64]) -> f64 {
        steps
            .iter()
            .zip(advantages)
            .map(|(s, adv)| {
                adv * log_softmax(&self.logits_with(params, &s.observation.load_ratios))[s.action]
            })
            .sum()
    }

    /// Analytic gradient of [`surrogate`](Self::surrogate).
    pub fn surrogate_grad(&self, params: &[f64], steps: &[PgStep], advantages: &[f64]) -> Vec<f64> {
        let stride = self.num_inputs + 1;
        let mut grad = vec![0.0; params.len()];
        for (s, adv) in steps.iter().zip(advantages) {
            let x = &s.observation.load_ratios;
            let probs = softmax(&self.logits_with(params, x));
            for (a, p) in probs.iter().enumerate() {
                let dz = adv * (if a == s.action { 1.0 } else { 0.0 } - p);
                let row = &mut grad[a * stride..(a + 1) * stride];
                for (g, v) in row[..self.num_inputs].iter_mut().zip(x) {
                    *g += dz * v;
                }
                row[self.num_inputs] += dz;
            }
        }
        grad
    }

    /// Buffers a step; runs an update each time a segment fills.
    pub fn observe(&mut self, step: PgStep) -> Result<()> {
        self.segment.push(step);
        if self.segment.len() >= self.segment_len {
            let segment = std::mem::take(&mut self.segment);
            self.update(&segment)?;
        }
        Ok(())
    }

    /// One gradient-ascent step on a complete segment.
    pub fn update(&mut self, trajectory: &[PgStep]) -> Result<()> {
        if trajectory.is_empty() {
            return Err(Error::Usage(
                "REINFORCE update on an empty trajectory".into(),
            ));
        }
        let rewards: Vec<f64> = trajectory.iter().map(|s| s.reward).collect();
        let returns = discounted_returns(&rewards, self.gamma);
        let advantages: Vec<f64> = returns.iter().map(|g| g - self.baseline).collect();
        let grad = self.surrogate_grad(&self.params, trajectory, &advantages);
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p += self.lr * g;
        }
        for g in returns {
            self.baseline_count += 1;
            self.baseline += (g - self.baseline) / self.baseline_count as f64;
        }
        Ok(())
    }

    /// One SGD step pulling the expected allocation towards `target`.
    pub fn distill(
        &mut self,
        obs: &Observation,
        fractions: &[Vec<f64>],
        target: &[f64],
        lr: f64,
    ) -> f64 {
        let x = &obs.load_ratios;
        let probs = self.action_probs(obs);
        let (loss, dz) = distill_logit_grad(&probs, fractions, target);
        let stride = self.num_inputs + 1;
        for (a, d) in dz.iter().enumerate() {
            let row = &mut self.params[a * stride..(a + 1) * stride];
            for (w, v) in row[..self.num_inputs].iter_mut().zip(x) {
                *w -= lr * d * v;
            }
            row[self.num_inputs] -= lr * d;
        }
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn agent() -> ReinforceAgent {
        ReinforceAgent::new(3, 15, 0.05, 0.9, 20, ChaCha8Rng::seed_from_u64(9))
    }

    fn step(action: usize, reward: f64) -> PgStep {
        PgStep {
            observation: Observation {
                load_ratios: vec![0.2, 0.3, 0.5],
            },
            action,
            reward,
            log_prob_old: 0.0,
        }
    }

    #[test]
    fn zero_advantage_leaves_parameters() {
        let a = agent();
        let steps: Vec<PgStep> = (0..5).map(|i| step(i, 1.0)).collect();
        let g = a.surrogate_grad(a.params(), &steps, &[0.0; 5]);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert!(matches!(agent().update(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn bandit_converges_to_rewarded_action() {
        let mut a = agent();
        let obs = step(0, 0.0).observation;
        for _ in 0..2000 * 20 {
            let act = a.select_action(&obs);
            let r = if act == 0 { 1.0 } else { 0.0 };
            a.observe(step(act, r)).unwrap();
        }
        let p0 = a.action_probs(&obs)[0];
        assert!(p0 > 0.9, "pi(0) = {p0}");
    }
}
