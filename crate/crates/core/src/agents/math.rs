//! Small dense-math helpers shared by the policy-gradient agents.

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a categorical distribution given `u` in [0, 1).
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Gradient of the squared distance between the expected allocation under
/// `probs` and `target`, with respect to the logits.
///
/// Returns `(loss, d loss / d logits)`. `fractions[a]` is the allocation of
/// action `a`.
pub fn distill_logit_grad(
    probs: &[f64],
    fractions: &[Vec<f64>],
    target: &[f64],
) -> (f64, Vec<f64>) {
    let mut expected = vec![0.0; target.len()];
    for (p, f) in probs.iter().zip(fractions) {
        for (e, x) in expected.iter_mut().zip(f) {
            *e += p * x;
        }
    }
    let diff: Vec<f64> = expected.iter().zip(target).map(|(e, t)| e - t).collect();
    let loss = diff.iter().map(|d| d * d).sum();
    let grad = probs
        .iter()
        .zip(fractions)
        .map(|(p, f)| {
            let dot: f64 = f
                .iter()
                .zip(&expected)
                .zip(&diff)
                .map(|((x, e), d)| (x - e) * d)
                .sum();
            2.0 * p * dot
        })
        .collect();
    (loss, grad)
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Reward-to-go within one segment.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-500.0f64..500.0, 1..20)) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 15]), 0);
    }

    #[test]
    fn returns_discount_backwards() {
        assert_eq!(
            discounted_returns(&[1.0, 1.0, 1.0], 0.5),
            vec![1.75, 1.5, 1.0]
        );
    }

    #[test]
    fn distill_grad_matches_finite_differences() {
        let logits = [0.3, -1.2, 0.8, 0.1];
        let fractions = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![0.25, 0.75],
        ];
        let target = [0.9, 0.1];
        let loss_at = |z: &[f64]| distill_logit_grad(&softmax(z), &fractions, &target).0;
        let (_, grad) = distill_logit_grad(&softmax(&logits), &fractions, &target);
        for i in 0..logits.len() {
            let h = 1e-6;
            let mut up = logits;
            let mut dn = logits;
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_at(&up) - loss_at(&dn)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn coincident_allocations_have_zero_distillation_gradient() {
        let fractions = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (loss, grad) = distill_logit_grad(&[0.5, 0.5], &fractions, &[0.5, 0.5]);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }
}
