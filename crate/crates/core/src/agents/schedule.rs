use serde::{Deserialize, Serialize};

pub const EXPERT_EPSILON: f64 = 0.9;
pub const LEARNER_EPSILON: f64 = 0.2;
pub const EPSILON_DECAY: f64 = 0.99;
pub const EPSILON_FLOOR: f64 = 0.01;

/// `epsilon(t) = max(floor, initial * decay^t)`, one decay per decision step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl EpsilonSchedule {
    pub fn expert() -> Self {
        Self::starting_at(EXPERT_EPSILON)
    }

    pub fn learner() -> Self {
        Self::starting_at(LEARNER_EPSILON)
    }

    pub fn starting_at(initial: f64) -> Self {
        EpsilonSchedule {
            initial,
            decay: EPSILON_DECAY,
            floor: EPSILON_FLOOR,
        }
    }

    pub fn constant(value: f64) -> Self {
        EpsilonSchedule {
            initial: value,
            decay: 1.0,
            floor: 0.0,
        }
    }

    pub fn value(&self, step: usize) -> f64 {
        let t = i32::try_from(step).unwrap_or(i32::MAX);
        (self.initial * self.decay.powi(t)).max(self.floor)
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::learner()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decays_to_floor() {
        let s = EpsilonSchedule::expert();
        assert_eq!(s.value(0), 0.9);
        assert!((s.value(1) - 0.891).abs() < 1e-15);
        assert_eq!(s.value(100), (0.9 * 0.99_f64.powi(100)).max(0.01));
        assert_eq!(s.value(10_000), 0.01);
        assert!((0..1000).all(|t| s.value(t + 1) <= s.value(t)));
    }
}
