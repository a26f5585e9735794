//! Arm-selection policies: the randomized KL Maillard sampling rule with a
//! pluggable inverse-temperature function, plus kl-UCB and uniform baselines.
//!
//! The sampling rule pulls each arm once in index order, then draws arm `a`
//! with probability proportional to
//! `exp(-L(N_a) * kl(mean_a, best_mean))`, where `N_a` is the pull count of
//! arm `a`, `mean_a` its empirical mean, `best_mean` the largest empirical
//! mean, and `L` the inverse-temperature function.

use rand::Rng;
use thiserror::Error;

use crate::oped::{OpedError, OpedFamily};

/// Weights below this are flushed to exact zero before normalization. The
/// empirically best arm always contributes weight 1, so the normalizer
/// stays at least 1.
const WEIGHT_FLUSH: f64 = 1e-300;

/// Bisection tolerance for the kl-UCB index.
const KLUCB_TOL: f64 = 1e-9;
const KLUCB_MAX_ITERS: u32 = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("temperature scale d must be > 1, got {0}")]
    BadTemperatureScale(f64),
    #[error("policy needs at least one arm")]
    NoArms,
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("arm {arm} has no pulls yet; forced round-robin applies instead")]
    UnpulledArm { arm: usize },
    #[error("kl-ucb bisection did not converge within {0} iterations")]
    BisectionNoConvergence(u32),
    #[error(transparent)]
    Oped(#[from] OpedError),
}

/// Inverse-temperature function `L(k)` applied to an arm's pull count.
///
/// Valid choices satisfy `0 <= L(k) <= k` and are nondecreasing. `ShiftByOne`
/// is the flagship variant; `Identity` recovers KL-MS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureFn {
    /// `L(k) = k - 1`
    ShiftByOne,
    /// `L(k) = k / d` with `d > 1`
    Scaled { d: f64 },
    /// `L(k) = k`
    Identity,
}

impl TemperatureFn {
    pub fn scaled(d: f64) -> Result<TemperatureFn, PolicyError> {
        if d.is_finite() && d > 1.0 {
            Ok(TemperatureFn::Scaled { d })
        } else {
            Err(PolicyError::BadTemperatureScale(d))
        }
    }

    pub fn value(&self, pulls: u64) -> f64 {
        match *self {
            TemperatureFn::ShiftByOne => (pulls.saturating_sub(1)) as f64,
            TemperatureFn::Scaled { d } => pulls as f64 / d,
            TemperatureFn::Identity => pulls as f64,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            TemperatureFn::ShiftByOne => "shift-by-one".to_string(),
            TemperatureFn::Scaled { d } => format!("scaled:{d}"),
            TemperatureFn::Identity => "identity".to_string(),
        }
    }
}

/// Per-arm pull counts and reward sums for one episode, plus the family and
/// inverse temperature the sampling rule needs. Single-owner; never shared
/// across episodes.
#[derive(Debug, Clone)]
pub struct PolicyState {
    family: OpedFamily,
    temperature: TemperatureFn,
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    t: u64,
}

impl PolicyState {
    pub fn new(
        family: OpedFamily,
        temperature: TemperatureFn,
        num_arms: usize,
    ) -> Result<PolicyState, PolicyError> {
        if num_arms == 0 {
            return Err(PolicyError::NoArms);
        }
        Ok(PolicyState {
            family,
            temperature,
            counts: vec![0; num_arms],
            reward_sums: vec![0.0; num_arms],
            t: 0,
        })
    }

    pub fn family(&self) -> &OpedFamily {
        &self.family
    }

    pub fn temperature(&self) -> TemperatureFn {
        self.temperature
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Empirical mean of an arm, defined once it has at least one pull.
    pub fn empirical_mean(&self, arm: usize) -> Option<f64> {
        if arm < self.counts.len() && self.counts[arm] > 0 {
            Some(self.reward_sums[arm] / self.counts[arm] as f64)
        } else {
            None
        }
    }

    fn best_empirical_mean(&self) -> Option<f64> {
        (0..self.num_arms())
            .map(|a| self.empirical_mean(a))
            .try_fold(f64::NEG_INFINITY, |acc, m| m.map(|v| acc.max(v)))
    }

    /// The sampling distribution `p_t` over arms. Requires every arm to have
    /// been pulled at least once.
    pub fn action_distribution(&self) -> Result<Vec<f64>, PolicyError> {
        if let Some(arm) = self.counts.iter().position(|&c| c == 0) {
            return Err(PolicyError::UnpulledArm { arm });
        }
        let best = self.best_empirical_mean().expect("all arms pulled");
        let mut weights = vec![0.0; self.num_arms()];
        let mut total = 0.0;
        for (arm, w) in weights.iter_mut().enumerate() {
            let mean = self.empirical_mean(arm).expect("all arms pulled");
            let kl = self.family.kl(mean, best)?;
            let temp = self.temperature.value(self.counts[arm]);
            // Convention: zero temperature wins over an infinite divergence,
            // giving exp(0) = 1 (the rule is uniform while L(N) = 0).
            let exponent = if temp == 0.0 { 0.0 } else { temp * kl };
            let mut weight = (-exponent).exp();
            if weight < WEIGHT_FLUSH {
                weight = 0.0;
            }
            *w = weight;
            total += weight;
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(weights)
    }

    /// Pull-arm rule: lowest-index unpulled arm during initialization, then
    /// a single-uniform inverse-CDF draw from [`PolicyState::action_distribution`].
    pub fn select_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, PolicyError> {
        if let Some(arm) = self.counts.iter().position(|&c| c == 0) {
            return Ok(arm);
        }
        let probs = self.action_distribution()?;
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (arm, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = arm;
            }
            acc += p;
            if u < acc {
                return Ok(arm);
            }
        }
        // Rounding left acc fractionally below 1; the draw belongs to the
        // last arm carrying mass.
        Ok(last_positive)
    }

    /// Record a pulled arm and its observed reward.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<(), PolicyError> {
        if arm >= self.counts.len() {
            return Err(PolicyError::ArmOutOfRange {
                arm,
                arms: self.counts.len(),
            });
        }
        self.counts[arm] += 1;
        self.reward_sums[arm] += reward;
        self.t += 1;
        Ok(())
    }
}

/// Largest mean `q` in the family's mean space with `kl(mean, q) <= budget`,
/// found by bisection. The exploration radius of the kl-UCB index.
pub fn klucb_quantile(family: &OpedFamily, mean: f64, budget: f64) -> Result<f64, PolicyError> {
    if budget <= 0.0 {
        return Ok(mean);
    }
    let space = family.mean_space();
    let hi_limit = if space.hi.is_finite() {
        space.hi
    } else {
        // Unbounded above: grow the bracket until the divergence exceeds the
        // budget. Doubling from the variance scale covers any finite budget.
        let mut step = family.variance(mean).map(|v| v.sqrt()).unwrap_or(1.0).max(1.0);
        let mut hi = mean + step;
        let mut iters = 0u32;
        while family.kl(mean, hi)? <= budget {
            step *= 2.0;
            hi = mean + step;
            iters += 1;
            if iters > KLUCB_MAX_ITERS {
                return Err(PolicyError::BisectionNoConvergence(KLUCB_MAX_ITERS));
            }
        }
        hi
    };
    if mean >= hi_limit {
        return Ok(mean);
    }
    if family.kl(mean, hi_limit)? <= budget {
        return Ok(hi_limit);
    }
    let mut lo = mean;
    let mut hi = hi_limit;
    let mut iters = 0u32;
    while hi - lo > KLUCB_TOL {
        if iters >= KLUCB_MAX_ITERS {
            return Err(PolicyError::BisectionNoConvergence(KLUCB_MAX_ITERS));
        }
        let mid = 0.5 * (lo + hi);
        if family.kl(mean, mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Ok(lo)
}

/// kl-UCB index of one arm: the quantile at exploration budget
/// `ln(t) / N_a`.
pub fn klucb_index(state: &PolicyState, arm: usize) -> Result<f64, PolicyError> {
    let mean = state
        .empirical_mean(arm)
        .ok_or(PolicyError::UnpulledArm { arm })?;
    let budget = (state.time().max(1) as f64).ln() / state.counts()[arm] as f64;
    klucb_quantile(state.family(), mean, budget)
}

/// kl-UCB arm choice: forced round-robin, then the largest index with
/// lowest-index tie-breaking.
pub fn klucb_select(state: &PolicyState) -> Result<usize, PolicyError> {
    if let Some(arm) = state.counts().iter().position(|&c| c == 0) {
        return Ok(arm);
    }
    let mut best_arm = 0;
    let mut best_index = f64::NEG_INFINITY;
    for arm in 0..state.num_arms() {
        let index = klucb_index(state, arm)?;
        if index > best_index {
            best_index = index;
            best_arm = arm;
        }
    }
    Ok(best_arm)
}

/// Uniform-random arm choice.
pub fn uniform_select<R: Rng + ?Sized>(num_arms: usize, rng: &mut R) -> usize {
    rng.gen_range(0..num_arms)
}
