//! Per-feature Gaussian state for continuous parameters and the running
//! reward average that every update is measured against.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Sampling distribution of one continuous feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GaussianState<T = f64> {
    pub mean: T,
    pub variance: T,
}

impl<T: Real> GaussianState<T> {
    pub fn new(mean: T, variance: T) -> Self {
        Self { mean, variance }
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrackerMode {
    #[default]
    Arithmetic,
    /// `avg <- beta * avg + (1 - beta) * r`.
    Exponential { beta: f64 },
}

/// Running average of observed rewards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RewardTracker<T = f64> {
    pub running_avg: T,
    pub count: u64,
    pub mode: TrackerMode,
}

impl<T: Real> RewardTracker<T> {
    pub fn new(mode: TrackerMode) -> Self {
        Self { running_avg: T::zero(), count: 0, mode }
    }

    /// `r - avg`, or zero before the first observation.
    pub fn advantage(&self, reward: T) -> T {
        if self.count == 0 {
            T::zero()
        } else {
            reward - self.running_avg
        }
    }

    pub fn observe(&self, reward: T) -> Self {
        update_reward_tracker(self, reward)
    }
}

pub fn update_reward_tracker<T: Real>(tracker: &RewardTracker<T>, reward: T) -> RewardTracker<T> {
    let running_avg = if tracker.count == 0 {
        reward
    } else {
        match tracker.mode {
            TrackerMode::Arithmetic => {
                let n = T::from_u64(tracker.count).expect("count fits scalar");
                (tracker.running_avg * n + reward) / (n + T::one())
            }
            TrackerMode::Exponential { beta } => {
                let beta = T::lit(beta);
                beta * tracker.running_avg + (T::one() - beta) * reward
            }
        }
    };
    RewardTracker { running_avg, count: tracker.count + 1, mode: tracker.mode }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceStrategy {
    #[default]
    DistanceBased,
    MomentBased,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSignMode {
    /// `mean += k * (r - avg)`.
    #[default]
    Unsigned,
    /// `mean += k * sign(s - mean) * (r - avg)`.
    SignCorrected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Update sensitivity.
    pub k: f64,
    pub variance_strategy: VarianceStrategy,
    pub var_floor: f64,
    pub mean_sign_mode: MeanSignMode,
    pub tracker: TrackerMode,
    /// Initial standard deviation as a fraction of the parameter's range.
    pub initial_sigma_fraction: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            k: 0.1,
            variance_strategy: VarianceStrategy::DistanceBased,
            var_floor: 1e-6,
            mean_sign_mode: MeanSignMode::Unsigned,
            tracker: TrackerMode::Arithmetic,
            initial_sigma_fraction: 0.1,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(format!("stats.k must be positive, got {}", self.k));
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(format!("stats.var_floor must be positive, got {}", self.var_floor));
        }
        if !(self.initial_sigma_fraction > 0.0 && self.initial_sigma_fraction.is_finite()) {
            return Err("stats.initial_sigma_fraction must be positive".into());
        }
        if let TrackerMode::Exponential { beta } = self.tracker {
            if !(0.0..1.0).contains(&beta) {
                return Err(format!("stats.tracker.beta must lie in [0, 1), got {beta}"));
            }
        }
        Ok(())
    }

    /// Starting state for a continuous parameter: mean at its initial value.
    pub fn initial_state<T: Real>(&self, initial: T, lower: T, upper: T) -> GaussianState<T> {
        let sigma = (upper - lower) * T::lit(self.initial_sigma_fraction);
        GaussianState::new(initial, (sigma * sigma).max(T::lit(self.var_floor)))
    }
}

fn signum_or_zero<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Moves the mean by `k * (r - avg)`, optionally signed by the side of the
/// mean the sample fell on. The result is clamped to `[lower, upper]`.
pub fn update_mean<T: Real>(
    state: &GaussianState<T>,
    sampled: T,
    reward: T,
    tracker: &RewardTracker<T>,
    cfg: &StatsConfig,
    bounds: (T, T),
) -> GaussianState<T> {
    let step = T::lit(cfg.k) * tracker.advantage(reward);
    let step = match cfg.mean_sign_mode {
        MeanSignMode::Unsigned => step,
        MeanSignMode::SignCorrected => signum_or_zero(sampled - state.mean) * step,
    };
    GaussianState { mean: (state.mean + step).clamp_to(bounds.0, bounds.1), variance: state.variance }
}

/// Distance-based variance update. Samples beyond one standard deviation
/// widen the distribution when they paid off; samples inside narrow it.
pub fn update_variance_distance<T: Real>(
    state: &GaussianState<T>,
    sampled: T,
    reward: T,
    tracker: &RewardTracker<T>,
    cfg: &StatsConfig,
) -> GaussianState<T> {
    let sigma = state.std_dev();
    let z = ((sampled - state.mean) / sigma).abs();
    let factor = if z >= T::one() { z - T::one() } else { T::one() - z };
    let variance = state.variance + T::lit(cfg.k) * factor * tracker.advantage(reward);
    GaussianState { mean: state.mean, variance: variance.max(T::lit(cfg.var_floor)) }
}

/// Moment-based variance update using the squared deviation as a one-sample
/// variance estimate.
pub fn update_variance_moment<T: Real>(
    state: &GaussianState<T>,
    sampled: T,
    reward: T,
    tracker: &RewardTracker<T>,
    cfg: &StatsConfig,
) -> GaussianState<T> {
    let dev = sampled - state.mean;
    let rel = (dev * dev - state.variance) / state.variance;
    let variance = state.variance + T::lit(cfg.k) * rel * tracker.advantage(reward);
    GaussianState { mean: state.mean, variance: variance.max(T::lit(cfg.var_floor)) }
}

pub fn update_variance<T: Real>(
    state: &GaussianState<T>,
    sampled: T,
    reward: T,
    tracker: &RewardTracker<T>,
    cfg: &StatsConfig,
) -> GaussianState<T> {
    match cfg.variance_strategy {
        VarianceStrategy::DistanceBased => update_variance_distance(state, sampled, reward, tracker, cfg),
        VarianceStrategy::MomentBased => update_variance_moment(state, sampled, reward, tracker, cfg),
    }
}

/// Applies the mean and variance updates for one mutated feature. Both are
/// computed from the pre-update state.
pub fn adapt<T: Real>(
    state: &GaussianState<T>,
    sampled: T,
    reward: T,
    tracker: &RewardTracker<T>,
    cfg: &StatsConfig,
    bounds: (T, T),
) -> GaussianState<T> {
    let mean = update_mean(state, sampled, reward, tracker, cfg, bounds).mean;
    let variance = update_variance(state, sampled, reward, tracker, cfg).variance;
    GaussianState { mean, variance }
}
