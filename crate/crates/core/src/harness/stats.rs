//! Learning-curve statistics: smoothing, convergence, drops, sign tests.

/// Fraction of the final-quartile mean the smoothed curve must reach.
pub const CONVERGENCE_FRACTION: f64 = 0.95;
/// Relative fall below the running maximum that counts as a drop.
pub const DROP_FRACTION: f64 = 0.2;

/// Trailing moving average; the first `window - 1` points average the
/// available prefix.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "smoothing window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Mean of the last quarter of `rewards` (at least one value).
pub fn final_quartile_mean(rewards: &[f64]) -> f64 {
    let n = rewards.len();
    let q = (n / 4).max(1).min(n);
    mean(&rewards[n - q..])
}

/// `target` lowered by `fraction` of its magnitude, so the threshold sits
/// below the plateau for negative rewards too.
fn below(target: f64, fraction: f64) -> f64 {
    target - fraction * target.abs()
}

/// First step whose smoothed reward reaches 95% of the final-quartile mean of
/// the raw rewards. Only steps with a full smoothing window are considered.
pub fn convergence_step(rewards: &[f64], window: usize) -> Option<usize> {
    if rewards.is_empty() {
        return None;
    }
    let smoothed = smooth(rewards, window);
    let threshold = below(final_quartile_mean(rewards), 1.0 - CONVERGENCE_FRACTION);
    let start = window.saturating_sub(1).min(rewards.len() - 1);
    (start..smoothed.len()).find(|&i| smoothed[i] >= threshold)
}

/// Number of times the smoothed curve enters the region more than 20% below
/// its running maximum, counted once the smoothing window is full.
pub fn drop_count(smoothed: &[f64], window: usize) -> usize {
    let start = window.saturating_sub(1);
    let mut running_max = f64::NEG_INFINITY;
    let mut dropped = false;
    let mut count = 0;
    for &v in smoothed.iter().skip(start) {
        running_max = running_max.max(v);
        let low = v < below(running_max, DROP_FRACTION);
        if low && !dropped {
            count += 1;
        }
        dropped = low;
    }
    count
}

/// Mean of the first `n` rewards (or all, if fewer).
pub fn early_mean(rewards: &[f64], n: usize) -> f64 {
    mean(&rewards[..n.min(rewards.len())])
}

/// One-sided sign-test p-value: probability of at least `wins` successes in
/// `trials` fair coin flips. Ties must be removed by the caller.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    (wins..=trials).map(|k| binomial(trials, k)).sum::<f64>() / 2f64.powi(trials as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_prefix_rule() {
        assert_eq!(smooth(&[0.0, 1.0, 2.0, 3.0], 2), vec![0.0, 0.5, 1.5, 2.5]);
        assert_eq!(smooth(&[4.0; 5], 3), vec![4.0; 5]);
        assert_eq!(smooth(&[1.0, 5.0, 2.0], 1), vec![1.0, 5.0, 2.0]);
        assert!(smooth(&[], 3).is_empty());
    }

    #[test]
    fn step_function_converges_at_the_step() {
        let mut r = vec![0.0; 100];
        r.extend(vec![1.0; 300]);
        assert_eq!(convergence_step(&r, 1), Some(100));
        // With window 10 the average first reaches 0.95 once all ten are ones.
        assert_eq!(convergence_step(&r, 10), Some(109));
    }

    #[test]
    fn negative_plateau_threshold() {
        let mut r = vec![-10.0; 50];
        r.extend(vec![-1.0; 150]);
        assert_eq!(convergence_step(&r, 1), Some(50));
    }

    #[test]
    fn drops_count_entries_not_steps() {
        let s = [1.0, 1.0, 0.5, 0.5, 1.0, 0.7, 1.0];
        assert_eq!(drop_count(&s, 1), 2);
        assert_eq!(drop_count(&[1.0, 0.9, 0.85], 1), 0);
    }

    #[test]
    fn sign_test_all_wins() {
        assert_eq!(sign_test_p(5, 5), 1.0 / 32.0);
        assert_eq!(sign_test_p(0, 5), 1.0);
        assert_eq!(sign_test_p(4, 5), 6.0 / 32.0);
    }
}
