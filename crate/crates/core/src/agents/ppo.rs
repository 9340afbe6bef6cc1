//! Clipped-surrogate policy optimization with a one-hidden-layer tanh policy
//! and a linear value head, trained by explicit backpropagation.
//!
//! Parameters live in one flat vector laid out as
//! `[W1 (H x d), b1 (H), W2 (A x H), b2 (A), wv (d), bv]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::math::{
    argmax, discounted_returns, distill_logit_grad, log_softmax, sample_categorical, softmax, Adam,
};
use super::PgStep;
use crate::env::Observation;
use crate::error::{Error, Result};

pub const MIN_BATCH: usize = 4;
pub const MAX_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoShape {
    pub inputs: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl PpoShape {
    pub fn param_count(&self) -> usize {
        let PpoShape {
            inputs: d,
            hidden: h,
            actions: a,
        } = *self;
        h * d + h + a * h + a + d + 1
    }

    /// Recovers the hidden width from a flat parameter count.
    pub fn from_param_count(inputs: usize, actions: usize, count: usize) -> Option<Self> {
        let fixed = actions + inputs + 1;
        let per_hidden = inputs + 1 + actions;
        let rest = count.checked_sub(fixed)?;
        (rest % per_hidden == 0 && rest > 0).then_some(PpoShape {
            inputs,
            hidden: rest / per_hidden,
            actions,
        })
    }

    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        self.hidden * self.inputs
    }
    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.actions * self.hidden
    }
    fn wv(&self) -> usize {
        self.b2() + self.actions
    }
    fn bv(&self) -> usize {
        self.wv() + self.inputs
    }
}

struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    value: f64,
}

/// One training sample with quantities frozen before the update epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub inputs: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub target_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoHyper {
    pub lr: f64,
    pub gamma: f64,
    pub clip: f64,
    pub epochs: usize,
    pub value_coef: f64,
    pub batch_size: usize,
    pub segment_len: usize,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    shape: PpoShape,
    params: Vec<f64>,
    hyper: PpoHyper,
    adam: Adam,
    segment: Vec<PgStep>,
    batch: Vec<Vec<PgStep>>,
    rng: ChaCha8Rng,
}

impl PpoAgent {
    pub fn new(shape: PpoShape, hyper: PpoHyper, mut rng: ChaCha8Rng) -> Result<Self> {
        if !(MIN_BATCH..=MAX_BATCH).contains(&hyper.batch_size) {
            return Err(Error::Config(format!(
                "PPO batch size must be in {MIN_BATCH}..={MAX_BATCH}, got {}",
                hyper.batch_size
            )));
        }
        let mut params = vec![0.0; shape.param_count()];
        let in_scale = 1.0 / (shape.inputs as f64).sqrt();
        for w in &mut params[shape.w1()..shape.b1()] {
            *w = in_scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        // Small output weights start the policy close to uniform.
        for w in &mut params[shape.w2()..shape.b2()] {
            *w = 0.01 * (2.0 * rng.random::<f64>() - 1.0);
        }
        Ok(PpoAgent {
            adam: Adam::new(params.len(), hyper.lr),
            shape,
            params,
            hyper,
            segment: Vec::with_capacity(hyper.segment_len),
            batch: Vec::with_capacity(hyper.batch_size),
            rng,
        })
    }

    pub fn shape(&self) -> PpoShape {
        self.shape
    }

    pub fn hyper(&self) -> PpoHyper {
        self.hyper
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

    fn forward(&self, params: &[f64], x: &[f64]) -> Forward {
        let s = self.shape;
        let hidden: Vec<f64> = (0..s.hidden)
            .map(|j| {
                let row = &params[s.w1() + j * s.inputs..s.w1() + (j + 1) * s.inputs];
                let pre = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params[s.b1() + j];
                pre.tanh()
            })
            .collect();
        let logits = (0..s.actions)
            .map(|a| {
                let row = &params[s.w2() + a * s.hidden..s.w2() + (a + 1) * s.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + params[s.b2() + a]
            })
            .collect();
        let value = params[s.wv()..s.bv()]
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + params[s.bv()];
        Forward {
            hidden,
            logits,
            value,
        }
    }

    pub fn logits(&self, obs: &Observation) -> Vec<f64> {
        self.forward(&self.params, &obs.load_ratios).logits
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.forward(&self.params, &obs.load_ratios).value
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

    /// Mean over samples of `-min(rho A, clip(rho) A) + c_v (V - G)^2`.
    pub fn loss(&self, params: &[f64], samples: &[PpoSample]) -> f64 {
        let eps = self.hyper.clip;
        let total: f64 = samples
            .iter()
            .map(|s| {
                let f = self.forward(params, &s.inputs);
                let ratio = (log_softmax(&f.logits)[s.action] - s.log_prob_old).exp();
                let surrogate = clipped_objective(ratio, s.advantage, eps);
                let err = f.value - s.target_return;
                -surrogate + self.hyper.value_coef * err * err
            })
            .sum();
        total / samples.len() as f64
    }

    /// Analytic gradient of [`loss`](Self::loss).
    pub fn loss_grad(&self, params: &[f64], samples: &[PpoSample]) -> Vec<f64> {
        let s = self.shape;
        let eps = self.hyper.clip;
        let scale = 1.0 / samples.len() as f64;
        let mut grad = vec![0.0; params.len()];
        for sample in samples {
            let x = &sample.inputs;
            let f = self.forward(params, x);
            let logp = log_softmax(&f.logits);
            let ratio = (logp[sample.action] - sample.log_prob_old).exp();
            let adv = sample.advantage;
            // The unclipped branch is the active one unless clipping binds.
            let unclipped_active = ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            let dloss_dlogp = if unclipped_active {
                -ratio * adv * scale
            } else {
                0.0
            };

            if dloss_dlogp != 0.0 {
                let probs = softmax(&f.logits);
                let dz: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(a, p)| dloss_dlogp * (if a == sample.action { 1.0 } else { 0.0 } - p))
                    .collect();
                let mut dh = vec![0.0; s.hidden];
                for (a, d) in dz.iter().enumerate() {
                    let w2 = s.w2() + a * s.hidden;
                    for j in 0..s.hidden {
                        grad[w2 + j] += d * f.hidden[j];
                        dh[j] += d * params[w2 + j];
                    }
                    grad[s.b2() + a] += d;
                }
                for j in 0..s.hidden {
                    let dpre = dh[j] * (1.0 - f.hidden[j] * f.hidden[j]);
                    let w1 = s.w1() + j * s.inputs;
                    for (i, v) in x.iter().enumerate() {
                        grad[w1 + i] += dpre * v;
                    }
                    grad[s.b1() + j] += dpre;
                }
            }

            let dv = 2.0 * self.hyper.value_coef * (f.value - sample.target_return) * scale;
            for (i, v) in x.iter().enumerate() {
                grad[s.wv() + i] += dv * v;
            }
            grad[s.bv()] += dv;
        }
        grad
    }

    /// Buffers a step; runs an update once `batch_size` segments are complete.
    pub fn observe(&mut self, step: PgStep) -> Result<()> {
        self.segment.push(step);
        if self.segment.len() >= self.hyper.segment_len {
            self.batch.push(std::mem::take(&mut self.segment));
            if self.batch.len() >= self.hyper.batch_size {
                let batch = std::mem::take(&mut self.batch);
                self.update(&batch)?;
            }
        }
        Ok(())
    }

    /// Freezes advantages and old log-probabilities for a batch of segments.
    pub fn prepare(&self, batch: &[Vec<PgStep>]) -> Vec<PpoSample> {
        let mut samples = Vec::new();
        for segment in batch {
            let rewards: Vec<f64> = segment.iter().map(|s| s.reward).collect();
            let returns = discounted_returns(&rewards, self.hyper.gamma);
            for (step, g) in segment.iter().zip(returns) {
                let v = self.value(&step.observation);
                samples.push(PpoSample {
                    inputs: step.observation.load_ratios.clone(),
                    action: step.action,
                    log_prob_old: step.log_prob_old,
                    advantage: g - v,
                    target_return: g,
                });
            }
        }
        samples
    }

    pub fn update(&mut self, batch: &[Vec<PgStep>]) -> Result<()> {
        if !(MIN_BATCH..=MAX_BATCH).contains(&batch.len()) {
            return Err(Error::Usage(format!(
                "PPO update needs {MIN_BATCH}..={MAX_BATCH} trajectories, got {}",
                batch.len()
            )));
        }
        if batch.iter().any(Vec::is_empty) {
            return Err(Error::Usage("PPO update on an empty trajectory".into()));
        }
        let samples = self.prepare(batch);
        for _ in 0..self.hyper.epochs {
            let grad = self.loss_grad(&self.params, &samples);
            self.adam.step(&mut self.params, &grad);
        }
        Ok(())
    }

    /// Gradient of the squared allocation distance with respect to all
    /// parameters (only the policy part is non-zero).
    pub fn distill_grad(
        &self,
        params: &[f64],
        obs: &Observation,
        fractions: &[Vec<f64>],
        target: &[f64],
    ) -> (f64, Vec<f64>) {
        let s = self.shape;
        let x = &obs.load_ratios;
        let f = self.forward(params, x);
        let (loss, dz) = distill_logit_grad(&softmax(&f.logits), fractions, target);
        let mut grad = vec![0.0; params.len()];
        let mut dh = vec![0.0; s.hidden];
        for (a, d) in dz.iter().enumerate() {
            let w2 = s.w2() + a * s.hidden;
            for j in 0..s.hidden {
                grad[w2 + j] += d * f.hidden[j];
                dh[j] += d * params[w2 + j];
            }
            grad[s.b2() + a] += d;
        }
        for j in 0..s.hidden {
            let dpre = dh[j] * (1.0 - f.hidden[j] * f.hidden[j]);
            for (i, v) in x.iter().enumerate() {
                grad[s.w1() + j * s.inputs + i] += dpre * v;
            }
            grad[s.b1() + j] += dpre;
        }
        (loss, grad)
    }

    /// One SGD step pulling the expected allocation towards `target`.
    pub fn distill(
        &mut self,
        obs: &Observation,
        fractions: &[Vec<f64>],
        target: &[f64],
        lr: f64,
    ) -> f64 {
        let (loss, grad) = self.distill_grad(&self.params, obs, fractions, target);
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        loss
    }
}

/// `min(rho A, clip(rho, 1 - eps, 1 + eps) A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn hyper(batch_size: usize) -> PpoHyper {
        PpoHyper {
            lr: 0.01,
            gamma: 0.9,
            clip: 0.2,
            epochs: 4,
            value_coef: 0.5,
            batch_size,
            segment_len: 20,
        }
    }

    fn shape() -> PpoShape {
        PpoShape {
            inputs: 3,
            hidden: 16,
            actions: 15,
        }
    }

    #[test]
    fn clip_bounds_positive_advantage() {
        assert!((clipped_objective(1.5, 2.0, 0.2) - 2.4).abs() < 1e-12);
        assert_eq!(clipped_objective(1.0, 0.7, 0.2), 0.7);
        // Negative advantage keeps the pessimistic unclipped value.
        assert!((clipped_objective(1.5, -1.0, 0.2) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn shape_round_trips_through_param_count() {
        let s = shape();
        assert_eq!(PpoShape::from_param_count(3, 15, s.param_count()), Some(s));
        assert_eq!(PpoShape::from_param_count(3, 15, s.param_count() + 1), None);
    }

    #[test]
    fn batch_size_outside_range_is_rejected() {
        let rng = ChaCha8Rng::seed_from_u64(0);
        assert!(PpoAgent::new(shape(), hyper(3), rng.clone()).is_err());
        assert!(PpoAgent::new(shape(), hyper(9), rng.clone()).is_err());
        let mut agent = PpoAgent::new(shape(), hyper(4), rng).unwrap();
        let seg = vec![PgStep {
            observation: Observation::uniform(3),
            action: 0,
            reward: 1.0,
            log_prob_old: 0.0,
        }];
        assert!(matches!(
            agent.update(&[seg.clone(), seg.clone()]),
            Err(Error::Usage(_))
        ));
        assert!(agent.update(&vec![seg; 4]).is_ok());
    }

    #[test]
    fn at_old_policy_gradient_is_vanilla_policy_gradient() {
        let agent = PpoAgent::new(shape(), hyper(4), ChaCha8Rng::seed_from_u64(1)).unwrap();
        let obs = Observation {
            load_ratios: vec![0.1, 0.2, 0.7],
        };
        let adv = 0.8;
        let sample = PpoSample {
            inputs: obs.load_ratios.clone(),
            action: 5,
            log_prob_old: agent.log_prob(&obs, 5),
            advantage: adv,
            target_return: agent.value(&obs),
        };
        let g = agent.loss_grad(agent.params(), std::slice::from_ref(&sample));
        // d(-A log pi)/d b2 = -A (onehot - pi)
        let probs = agent.action_probs(&obs);
        let s = agent.shape();
        for a in 0..15 {
            let expected = -adv * (if a == 5 { 1.0 } else { 0.0 } - probs[a]);
            assert!((g[s.b2() + a] - expected).abs() < 1e-12);
        }
    }
}
