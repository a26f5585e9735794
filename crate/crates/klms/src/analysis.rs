//! Numeric evaluators for the regret upper bound and its corollaries, plus
//! executable forms of the supporting inequalities (Chernoff tails and the
//! geometric-log series bound).
//!
//! The corollary evaluators report leading terms with constant 1. They are
//! order-level yardsticks for judging simulated regret, not acceptance
//! thresholds on their own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oped::{OpedError, OpedFamily};
use crate::simulator::BanditInstance;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("delta must be nonnegative, got {0}")]
    BadDelta(f64),
    #[error("c must lie in (0, 1/4], got {0}")]
    BadC(f64),
    #[error("{family}: shifted mean {value} leaves the mean space; the bound is vacuous there")]
    ShiftedMeanOutOfDomain { family: &'static str, value: f64 },
    #[error("geometric-log bound requires T >= 1 and a > 1/T, got T={t}, a={a}")]
    GeoLogHypothesis { t: u64, a: f64 },
    #[error("{family}: epsilon {epsilon} pushes the mean outside the mean space")]
    BadEpsilon { family: &'static str, epsilon: f64 },
    #[error("tail check needs at least 10^4 Monte Carlo replications, got {0}")]
    TooFewReplications(usize),
    #[error(transparent)]
    Oped(#[from] OpedError),
}

/// Evaluated regret upper bound with its per-term breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound_name: &'static str,
    pub instance_label: String,
    pub horizon: u64,
    pub delta: f64,
    pub c: f64,
    /// Sum of the breakdown terms.
    pub value: f64,
    pub terms: Vec<(&'static str, f64)>,
}

fn ln_or_e(x: f64) -> f64 {
    x.max(std::f64::consts::E).ln()
}

/// Evaluate the finite-time regret upper bound of the shift-by-one sampling
/// rule at slack `delta` and margin fraction `c`.
///
/// The four term groups are: the `T * delta` slack; the leading logarithmic
/// group; the constant inverse-divergence group; and, per arm, the smaller
/// of the horizon-free underestimate group and its logarithmic alternative.
pub fn theorem1_bound(
    instance: &BanditInstance,
    horizon: u64,
    delta: f64,
    c: f64,
) -> Result<BoundReport, AnalysisError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(AnalysisError::BadDelta(delta));
    }
    if !c.is_finite() || c <= 0.0 || c > 0.25 {
        return Err(AnalysisError::BadC(c));
    }
    let family = instance.family();
    let space = family.mean_space();
    let best = instance.best_mean();
    let t = horizon as f64;

    let t_delta = t * delta;
    let mut leading_log = 0.0;
    let mut inverse_kl = 0.0;
    let mut underestimate = 0.0;
    for &mu in instance.means() {
        let gap = best - mu;
        if gap <= delta || gap == 0.0 {
            continue;
        }
        let lifted = mu + c * gap;
        let lowered = best - c * gap;
        for shifted in [lifted, lowered] {
            if !space.contains_interior(shifted) {
                return Err(AnalysisError::ShiftedMeanOutOfDomain {
                    family: family.name(),
                    value: shifted,
                });
            }
        }
        let kl_sep = family.kl(lifted, lowered)?;
        let kl_over = family.kl(lifted, mu)?;
        let kl_under = family.kl(lowered, best)?;
        leading_log += gap * (ln_or_e(t * kl_sep) / kl_sep) + gap;
        inverse_kl += gap * (1.0 / kl_sep + 1.0 / kl_over);
        let horizon_free = gap * (1.0 / kl_under + 1.0 / (kl_under * kl_under));
        let logarithmic = gap * (16.0 * ln_or_e(t * kl_under) / kl_under);
        underestimate += horizon_free.min(logarithmic);
    }
    let terms = vec![
        ("t_delta", t_delta),
        ("leading_log", leading_log),
        ("inverse_kl", inverse_kl),
        ("underestimate", underestimate),
    ];
    Ok(BoundReport {
        bound_name: "theorem1",
        instance_label: instance.label(),
        horizon,
        delta,
        c,
        value: terms.iter().map(|(_, v)| v).sum(),
        terms,
    })
}

/// Slack grid used to minimize the bound: zero plus 40 log-spaced values
/// between `1e-3 * gap_min` and `gap_max`.
pub fn delta_grid(instance: &BanditInstance) -> Vec<f64> {
    let mut grid = vec![0.0];
    let positive: Vec<f64> = instance.gaps().into_iter().filter(|&g| g > 0.0).collect();
    if let (Some(&min), Some(&max)) = (
        positive
            .iter()
            .min_by(|a, b| a.partial_cmp(b).expect("finite gaps")),
        positive
            .iter()
            .max_by(|a, b| a.partial_cmp(b).expect("finite gaps")),
    ) {
        let lo = (1e-3 * min).ln();
        let hi = max.ln();
        let n = 40;
        for i in 0..n - 1 {
            grid.push((lo + (hi - lo) * i as f64 / (n - 1) as f64).exp());
        }
        // Pin the endpoint exactly: at slack gap_max the sums empty out and
        // the bound collapses to T * gap_max.
        grid.push(max);
    }
    grid
}

/// The bound holds for every slack, so report the smallest value over the
/// grid.
pub fn theorem1_bound_min(
    instance: &BanditInstance,
    horizon: u64,
    c: f64,
) -> Result<BoundReport, AnalysisError> {
    let mut best: Option<BoundReport> = None;
    for delta in delta_grid(instance) {
        let report = theorem1_bound(instance, horizon, delta, c)?;
        if best.as_ref().is_none_or(|b| report.value < b.value) {
            best = Some(report);
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// The Lai-Robbins constant `sum_a gap_a / kl(mu_a, mu_max)`: the asymptotic
/// slope of regret against `ln(T)`.
pub fn asymptotic_constant(instance: &BanditInstance) -> Result<f64, AnalysisError> {
    let best = instance.best_mean();
    let mut total = 0.0;
    for &mu in instance.means() {
        let gap = best - mu;
        if gap > 0.0 {
            total += gap / instance.family().kl(mu, best)?;
        }
    }
    Ok(total)
}

/// Finite-time scale of UCB-style gap-dependent bounds:
/// `sum_a ln(T)/gap_a + sum_a gap_a` over suboptimal arms. Reported with
/// constant 1; choosing the constants is left to the reader.
pub fn sub_ucb_scale(instance: &BanditInstance, horizon: u64) -> f64 {
    let ln_t = (horizon as f64).ln();
    instance
        .gaps()
        .into_iter()
        .filter(|&g| g > 0.0)
        .map(|g| ln_t / g + g)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimaxFlavor {
    /// Scale by the family-wide variance maximum.
    MaxVariance,
    /// Scale by the variance of the best arm's distribution.
    Adaptive,
}

/// Leading minimax term `sqrt(V * K * T * ln(K))` with `V` selected by the
/// flavor. Constant 1 by convention.
pub fn minimax_bound(
    instance: &BanditInstance,
    horizon: u64,
    flavor: MinimaxFlavor,
) -> Result<f64, AnalysisError> {
    let family = instance.family();
    let v = match flavor {
        MinimaxFlavor::MaxVariance => {
            family
                .variance_max()
                .ok_or(OpedError::UnsupportedMode {
                    family: family.name(),
                    mode: "max-variance",
                })?
        }
        MinimaxFlavor::Adaptive => family.variance(instance.best_mean())?,
    };
    let k = instance.num_arms() as f64;
    Ok((v * k * horizon as f64 * k.ln()).sqrt())
}

/// Exact finite sum `sum_{k=1}^T exp(-k a) ln(T/k)` and its closed bound
/// `5 ln(max(Ta, e)) / a`.
pub fn geo_log_sum_check(t: u64, a: f64) -> Result<(f64, f64), AnalysisError> {
    if t < 1 || !a.is_finite() || a <= 1.0 / t as f64 {
        return Err(AnalysisError::GeoLogHypothesis { t, a });
    }
    let tf = t as f64;
    let mut lhs = 0.0;
    for k in 1..=t {
        lhs += (-(k as f64) * a).exp() * (tf / k as f64).ln();
    }
    let rhs = 5.0 * ln_or_e(tf * a) / a;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Lower,
    Upper,
}

/// Monte Carlo estimate of a sample-mean tail probability next to its
/// Chernoff bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCheck {
    /// Frequency of the tail event over the replications.
    pub freq: f64,
    /// `exp(-N kl(mu -+ eps, mu))`.
    pub bound: f64,
    /// Binomial standard error of the frequency.
    pub std_err: f64,
}

/// Estimate `P(mean of N draws < mu - eps)` (or the upper tail) by Monte
/// Carlo and evaluate the Chernoff bound it must stay under.
pub fn chernoff_check(
    family: &OpedFamily,
    mu: f64,
    epsilon: f64,
    n_samples: u64,
    n_mc: usize,
    seed: u64,
    tail: Tail,
) -> Result<TailCheck, AnalysisError> {
    if n_mc < 10_000 {
        return Err(AnalysisError::TooFewReplications(n_mc));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(AnalysisError::BadEpsilon {
            family: family.name(),
            epsilon,
        });
    }
    let shifted = match tail {
        Tail::Lower => mu - epsilon,
        Tail::Upper => mu + epsilon,
    };
    if !family.mean_space().contains_closure(shifted) {
        return Err(AnalysisError::BadEpsilon {
            family: family.name(),
            epsilon,
        });
    }
    let bound = (-(n_samples as f64) * family.kl(shifted, mu)?).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_mc {
        let mut sum = 0.0;
        for _ in 0..n_samples {
            sum += family.sample(mu, &mut rng)?;
        }
        let sample_mean = sum / n_samples as f64;
        let hit = match tail {
            Tail::Lower => sample_mean < shifted,
            Tail::Upper => sample_mean > shifted,
        };
        if hit {
            hits += 1;
        }
    }
    let freq = hits as f64 / n_mc as f64;
    let std_err = (freq * (1.0 - freq) / n_mc as f64).sqrt();
    Ok(TailCheck {
        freq,
        bound,
        std_err,
    })
}

/// Least-squares slope of `values[t-1]` against `ln(t)` over `t` in
/// `[t_lo, t_hi]` (1-based, inclusive).
pub fn log_slope(values: &[f64], t_lo: usize, t_hi: usize) -> f64 {
    assert!(t_lo >= 1 && t_hi <= values.len() && t_lo < t_hi);
    let n = (t_hi - t_lo + 1) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in t_lo..=t_hi {
        let x = (t as f64).ln();
        let y = values[t - 1];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (sxy - sx * sy / n) / (sxx - sx * sx / n)
}
