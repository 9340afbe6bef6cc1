//! Per-user packet arrival generation.
//!
//! Each slice carries a [`ServiceProfile`] describing its interarrival and
//! packet-size laws. Truncated laws are calibrated once into a [`Sampler`];
//! every user owns an independent ChaCha stream keyed by
//! `(run seed, slice, user, incarnation)`, so churn in one slice never shifts
//! the draws seen by another.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Pareto shape used when a config does not give one (3GPP FTP model).
pub const DEFAULT_PARETO_SHAPE: f64 = 1.1;

/// Consecutive unfulfilled deliveries after which a user leaves.
pub const DEFAULT_UNFULFILLED_LIMIT: u32 = 3;

fn default_shape() -> f64 {
    DEFAULT_PARETO_SHAPE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServiceClass {
    #[serde(rename = "Video")]
    Video,
    #[serde(rename = "VoLTE")]
    Volte,
    #[serde(rename = "URLLC")]
    Urllc,
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            ServiceClass::Video => "Video",
            ServiceClass::Volte => "VoLTE",
            ServiceClass::Urllc => "URLLC",
        };
        f.write_str(label)
    }
}

impl ServiceClass {
    /// Interarrival law (ms) for the class.
    pub fn interarrival(self) -> DistSpec {
        match self {
            ServiceClass::Video => DistSpec::TruncatedPareto {
                mean: 6.0,
                max: 12.5,
                shape: DEFAULT_PARETO_SHAPE,
            },
            ServiceClass::Volte => DistSpec::Uniform {
                min: 0.0,
                max: 160.0,
            },
            ServiceClass::Urllc => DistSpec::Exponential { mean: 180.0 },
        }
    }

    /// Packet-size law (bytes) for the class.
    pub fn packet_size(self) -> DistSpec {
        match self {
            ServiceClass::Video => DistSpec::TruncatedPareto {
                mean: 100.0,
                max: 250.0,
                shape: DEFAULT_PARETO_SHAPE,
            },
            ServiceClass::Volte => DistSpec::Constant { value: 40.0 },
            ServiceClass::Urllc => DistSpec::TruncatedLognormal {
                mean: 2.0e6,
                std_dev: 0.722e6,
                max: 5.0e6,
            },
        }
    }
}

/// A traffic law, as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistSpec {
    TruncatedPareto {
        mean: f64,
        max: f64,
        #[serde(default = "default_shape")]
        shape: f64,
    },
    Uniform {
        min: f64,
        max: f64,
    },
    Exponential {
        mean: f64,
    },
    Constant {
        value: f64,
    },
    TruncatedLognormal {
        mean: f64,
        std_dev: f64,
        max: f64,
    },
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            DistSpec::TruncatedPareto { mean, max, shape } => {
                if !(shape > 0.0 && shape.is_finite()) {
                    return bad(format!("pareto shape must be positive, got {shape}"));
                }
                if !(mean > 0.0 && mean < max && max.is_finite()) {
                    return bad(format!(
                        "pareto needs 0 < mean < max, got mean={mean} max={max}"
                    ));
                }
            }
            DistSpec::Uniform { min, max } => {
                if !(min >= 0.0 && max > min && max.is_finite()) {
                    return bad(format!("uniform needs max > min >= 0, got [{min}, {max}]"));
                }
            }
            DistSpec::Exponential { mean } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return bad(format!("exponential mean must be positive, got {mean}"));
                }
            }
            DistSpec::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return bad(format!("constant must be non-negative, got {value}"));
                }
            }
            DistSpec::TruncatedLognormal { mean, std_dev, max } => {
                if !(mean > 0.0 && std_dev > 0.0 && max > mean && max.is_finite()) {
                    return bad(format!(
                        "log-normal needs mean > 0, std_dev > 0, max > mean; got mean={mean} sd={std_dev} max={max}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// The configured mean, used for offered-load arithmetic.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            DistSpec::TruncatedPareto { mean, .. } => mean,
            DistSpec::Uniform { min, max } => 0.5 * (min + max),
            DistSpec::Exponential { mean } => mean,
            DistSpec::Constant { value } => value,
            DistSpec::TruncatedLognormal { mean, .. } => mean,
        }
    }

    /// Validates and calibrates the law into something that can be drawn from.
    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match *self {
            DistSpec::TruncatedPareto { mean, max, shape } => Sampler::ClampedPareto {
                scale: calibrate_truncated_pareto(mean, max, shape)?,
                shape,
                max,
            },
            DistSpec::Uniform { min, max } => Sampler::Uniform { min, max },
            DistSpec::Exponential { mean } => Sampler::Exponential { mean },
            DistSpec::Constant { value } => Sampler::Constant(value),
            DistSpec::TruncatedLognormal { mean, std_dev, max } => {
                let (mu, sigma) = calibrate_truncated_lognormal(mean, std_dev, max)?;
                Sampler::TruncatedLognormal { mu, sigma, max }
            }
        })
    }
}

/// A calibrated law ready for sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampler {
    /// Pareto with values above `max` set to `max`.
    ClampedPareto {
        scale: f64,
        shape: f64,
        max: f64,
    },
    Uniform {
        min: f64,
        max: f64,
    },
    Exponential {
        mean: f64,
    },
    Constant(f64),
    /// Log-normal with draws above `max` rejected.
    TruncatedLognormal {
        mu: f64,
        sigma: f64,
        max: f64,
    },
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Sampler::ClampedPareto { scale, shape, max } => {
                // 1 - U lies in (0, 1], so the power is finite.
                let u = 1.0 - rng.random::<f64>();
                (scale * u.powf(-1.0 / shape)).min(max)
            }
            Sampler::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
            Sampler::Exponential { mean } => {
                let e: f64 = rng.sample(Exp1);
                mean * e
            }
            Sampler::Constant(v) => v,
            Sampler::TruncatedLognormal { mu, sigma, max } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = (mu + sigma * z).exp();
                if x <= max {
                    break x;
                }
            },
        }
    }
}

/// Mean of `min(X, max)` for `X ~ Pareto(scale, shape)`, `scale <= max`.
pub fn clamped_pareto_mean(scale: f64, shape: f64, max: f64) -> f64 {
    if (shape - 1.0).abs() < 1e-12 {
        scale * (1.0 + (max / scale).ln())
    } else {
        (shape * scale - scale.powf(shape) * max.powf(1.0 - shape)) / (shape - 1.0)
    }
}

/// Finds the Pareto scale whose clamped mean equals `target_mean`.
///
/// The clamped mean is strictly increasing in the scale on `(0, max]` and
/// reaches `max` at `scale = max`, so bisection over that interval converges
/// for every `0 < target_mean < max`.
pub fn calibrate_truncated_pareto(target_mean: f64, max: f64, shape: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Config(format!(
            "pareto shape must be positive, got {shape}"
        )));
    }
    if !(target_mean < max) {
        return Err(Error::InfeasibleCalibration(format!(
            "clamped pareto mean is strictly below max; target {target_mean} >= max {max}"
        )));
    }
    if !(target_mean > 0.0) {
        return Err(Error::InfeasibleCalibration(format!(
            "target mean {target_mean} is not above the implied minimum 0"
        )));
    }
    // min(X, max) >= scale, so scale <= target; for shape > 1 the untruncated
    // mean bounds it from below. Bisect geometrically inside that bracket.
    let mut hi = target_mean;
    let mut lo = if shape > 1.0 {
        target_mean * (shape - 1.0) / shape
    } else {
        target_mean * 1e-300
    };
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if clamped_pareto_mean(mid, shape, max) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Moment inversion for the underlying normal: returns `(mu, sigma)`.
pub fn calibrate_truncated_lognormal(
    target_mean: f64,
    target_sd: f64,
    max: f64,
) -> Result<(f64, f64)> {
    if !(target_mean > 0.0 && target_sd > 0.0) {
        return Err(Error::Config(format!(
            "log-normal needs positive mean and sd, got mean={target_mean} sd={target_sd}"
        )));
    }
    if !(max > target_mean) {
        return Err(Error::Config(format!(
            "log-normal max {max} must exceed mean {target_mean}"
        )));
    }
    let ratio = target_sd / target_mean;
    let var = (1.0 + ratio * ratio).ln();
    Ok((target_mean.ln() - 0.5 * var, var.sqrt()))
}

/// Traffic law and SLA parameters for one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceProfile {
    pub name: String,
    pub class: ServiceClass,
    pub interarrival: DistSpec,
    pub packet_size: DistSpec,
    pub num_users: usize,
    pub sla_c1: f64,
    pub sla_c2: f64,
    /// Latency (ms) beyond which a delivered packet is unfulfilled.
    /// `f64::INFINITY` disables churn.
    pub deadline: f64,
    pub unfulfilled_limit: u32,
}

impl ServiceProfile {
    /// Table defaults for `class` with the given SLA thresholds and a
    /// deadline of `2 * c2`.
    pub fn for_class(class: ServiceClass, num_users: usize, c1: f64, c2: f64) -> Self {
        ServiceProfile {
            name: class.to_string(),
            class,
            interarrival: class.interarrival(),
            packet_size: class.packet_size(),
            num_users,
            sla_c1: c1,
            sla_c2: c2,
            deadline: 2.0 * c2,
            unfulfilled_limit: DEFAULT_UNFULFILLED_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.interarrival.validate()?;
        self.packet_size.validate()?;
        if self.num_users == 0 {
            return Err(Error::Config(format!("slice {} has no users", self.name)));
        }
        if !(0.0 < self.sla_c1 && self.sla_c1 < self.sla_c2 && self.sla_c2 <= self.deadline) {
            return Err(Error::Config(format!(
                "slice {} needs 0 < c1 < c2 <= deadline, got c1={} c2={} deadline={}",
                self.name, self.sla_c1, self.sla_c2, self.deadline
            )));
        }
        if self.unfulfilled_limit == 0 {
            return Err(Error::Config("unfulfilled limit must be at least 1".into()));
        }
        Ok(())
    }

    /// Offered load in bytes per ms for the whole slice.
    pub fn offered_load(&self) -> f64 {
        self.num_users as f64 * self.packet_size.nominal_mean() / self.interarrival.nominal_mean()
    }
}

/// Calibrated samplers for one profile.
#[derive(Debug, Clone, Copy)]
pub struct TrafficSource {
    pub interarrival: Sampler,
    pub packet_size: Sampler,
}

impl TrafficSource {
    pub fn new(profile: &ServiceProfile) -> Result<Self> {
        Ok(TrafficSource {
            interarrival: profile.interarrival.sampler()?,
            packet_size: profile.packet_size.sampler()?,
        })
    }
}

/// One generated packet arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChurnEvent {
    pub slice_id: usize,
    pub user_id: usize,
}

/// Arrival process state for one user.
#[derive(Debug, Clone)]
pub struct UserSession {
    pub user_id: usize,
    pub slice_id: usize,
    pub next_arrival_time: f64,
    pub consecutive_unfulfilled: u32,
    pub incarnation: u32,
    run_seed: u64,
    rng: ChaCha8Rng,
}

impl UserSession {
    /// Opens a session at `start`; the first packet arrives one interarrival later.
    pub fn new(
        run_seed: u64,
        slice_id: usize,
        user_id: usize,
        start: f64,
        source: &TrafficSource,
    ) -> Self {
        Self::with_incarnation(run_seed, slice_id, user_id, 0, start, source)
    }

    fn with_incarnation(
        run_seed: u64,
        slice_id: usize,
        user_id: usize,
        incarnation: u32,
        start: f64,
        source: &TrafficSource,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        rng.set_stream(stream_id(slice_id, user_id, incarnation));
        let first = start + source.interarrival.sample(&mut rng);
        UserSession {
            user_id,
            slice_id,
            next_arrival_time: first,
            consecutive_unfulfilled: 0,
            incarnation,
            run_seed,
            rng,
        }
    }

    pub fn rng_stream_id(&self) -> u64 {
        stream_id(self.slice_id, self.user_id, self.incarnation)
    }

    /// A fresh session for the same slot, drawing from a new stream.
    pub fn respawn(&self, now: f64, source: &TrafficSource) -> UserSession {
        Self::with_incarnation(
            self.run_seed,
            self.slice_id,
            self.user_id,
            self.incarnation + 1,
            now,
            source,
        )
    }

    /// All arrivals strictly before `until`, in time order.
    pub fn generate_arrivals(&mut self, source: &TrafficSource, until: f64) -> Vec<Arrival> {
        let mut out = Vec::new();
        self.generate_into(source, until, &mut out);
        out
    }

    pub(crate) fn generate_into(
        &mut self,
        source: &TrafficSource,
        until: f64,
        out: &mut Vec<Arrival>,
    ) {
        while self.next_arrival_time < until {
            let size = source.packet_size.sample(&mut self.rng);
            out.push(Arrival {
                time: self.next_arrival_time,
                size,
            });
            self.next_arrival_time += source.interarrival.sample(&mut self.rng);
        }
    }
}

fn stream_id(slice_id: usize, user_id: usize, incarnation: u32) -> u64 {
    ((slice_id as u64) << 48)
        | ((user_id as u64 & 0xff_ffff) << 24)
        | (incarnation as u64 & 0xff_ffff)
}

/// Updates the unfulfilled counter; returns a churn event when the user gives up.
pub fn record_delivery_outcome(
    session: &mut UserSession,
    latency: f64,
    profile: &ServiceProfile,
) -> Option<ChurnEvent> {
    if latency > profile.deadline {
        session.consecutive_unfulfilled += 1;
        if session.consecutive_unfulfilled >= profile.unfulfilled_limit {
            return Some(ChurnEvent {
                slice_id: session.slice_id,
                user_id: session.user_id,
            });
        }
    } else {
        session.consecutive_unfulfilled = 0;
    }
    None
}
