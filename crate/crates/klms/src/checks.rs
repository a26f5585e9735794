//! Grid-based property suites over the reward families: closed-form KL
//! against the quadrature oracle, the Bregman three-point identity, the
//! Pinsker-style lower bounds, Chernoff tail frequencies, and the
//! geometric-log series bound. The CLI serializes these rows; the acceptance
//! tests assert on them directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{chernoff_check, geo_log_sum_check, AnalysisError, Tail};
use crate::oped::{KlLowerBoundMode, OpedFamily};

/// One evaluated case: the measured quantity, the oracle or bound it is held
/// against, and whether it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub case: String,
    pub measured: f64,
    pub reference: f64,
    pub pass: bool,
}

/// The fixed family roster used by every suite.
pub fn standard_families() -> Vec<OpedFamily> {
    vec![
        OpedFamily::bernoulli(),
        OpedFamily::poisson(20.0).expect("positive cap"),
        OpedFamily::gaussian(1.0).expect("positive sigma"),
        OpedFamily::gamma(2.0, 20.0).expect("positive parameters"),
        OpedFamily::inverse_gaussian(2.0, 20.0).expect("positive parameters"),
    ]
}

/// Interior mean grid per family; all ordered pairs give 64 cases, more than
/// the 50 the oracle suite needs.
pub fn mean_grid(family: &OpedFamily) -> Vec<f64> {
    match family {
        OpedFamily::Bernoulli => vec![0.05, 0.15, 0.3, 0.45, 0.55, 0.7, 0.85, 0.95],
        OpedFamily::Gaussian { .. } => vec![-3.0, -1.5, -0.5, 0.0, 0.5, 1.5, 3.0, 5.0],
        _ => vec![0.5, 1.0, 2.0, 4.0, 7.0, 10.0, 14.0, 18.0],
    }
}

/// Closed-form KL against the quadrature oracle:
/// `|kl - quadrature| <= 1e-8 * max(1, kl)` on the full pair grid.
pub fn kl_oracle_rows() -> Result<Vec<CheckRow>, AnalysisError> {
    let mut rows = Vec::new();
    for family in standard_families() {
        let grid = mean_grid(&family);
        for &a in &grid {
            for &b in &grid {
                let kl = family.kl(a, b)?;
                let oracle = family.kl_quadrature(a, b)?;
                rows.push(CheckRow {
                    case: format!("{} kl({a},{b})", family.name()),
                    measured: kl,
                    reference: oracle,
                    pass: (kl - oracle).abs() <= 1e-8 * kl.max(1.0),
                });
            }
        }
    }
    Ok(rows)
}

fn triple_range(family: &OpedFamily) -> (f64, f64) {
    match family {
        OpedFamily::Bernoulli => (0.02, 0.98),
        OpedFamily::Gaussian { .. } => (-10.0, 10.0),
        _ => {
            let hi = family.mean_space().hi;
            (0.05 * hi, 0.95 * hi)
        }
    }
}

/// Bregman identity residual on 1000 random interior triples per family;
/// passes when `|residual| <= 1e-10`.
pub fn bregman_rows(seed: u64) -> Result<Vec<CheckRow>, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for family in standard_families() {
        let (lo, hi) = triple_range(&family);
        for _ in 0..1000 {
            let a = rng.gen_range(lo..hi);
            let b = rng.gen_range(lo..hi);
            let c = rng.gen_range(lo..hi);
            let residual = family.bregman_residual(a, b, c)?;
            rows.push(CheckRow {
                case: format!("{} bregman({a:.6},{b:.6},{c:.6})", family.name()),
                measured: residual.abs(),
                reference: 1e-10,
                pass: residual.abs() <= 1e-10,
            });
        }
    }
    Ok(rows)
}

/// Both lower-bound modes against the true divergence on the full pair grid.
pub fn pinsker_rows() -> Result<Vec<CheckRow>, AnalysisError> {
    let mut rows = Vec::new();
    for family in standard_families() {
        let grid = mean_grid(&family);
        for &a in &grid {
            for &b in &grid {
                let kl = family.kl(a, b)?;
                for (mode, tag) in [
                    (KlLowerBoundMode::Lipschitz, "lipschitz"),
                    (KlLowerBoundMode::MaxVariance, "max-variance"),
                ] {
                    let lb = family.kl_lower_bound(a, b, mode)?;
                    rows.push(CheckRow {
                        case: format!("{} {tag}({a},{b})", family.name()),
                        measured: lb,
                        // Equality is attainable (Gaussian), so allow float
                        // slack at the boundary.
                        reference: kl,
                        pass: lb <= kl * (1.0 + 1e-12) + f64::EPSILON,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Per-family tail cases for the Chernoff suite: a base mean and three
/// epsilon offsets that keep both tails inside the mean space.
pub fn chernoff_grid() -> Vec<(OpedFamily, f64, [f64; 3])> {
    vec![
        (OpedFamily::bernoulli(), 0.5, [0.05, 0.1, 0.2]),
        (
            OpedFamily::poisson(20.0).expect("positive cap"),
            4.0,
            [0.2, 0.5, 1.0],
        ),
        (
            OpedFamily::gaussian(1.0).expect("positive sigma"),
            0.0,
            [0.25, 0.5, 1.0],
        ),
        (
            OpedFamily::gamma(2.0, 20.0).expect("positive parameters"),
            4.0,
            [0.25, 0.5, 1.0],
        ),
        (
            OpedFamily::inverse_gaussian(2.0, 20.0).expect("positive parameters"),
            2.0,
            [0.15, 0.3, 0.6],
        ),
    ]
}

/// Monte Carlo tail frequencies against `exp(-N kl)` bounds, both tails, on
/// the `N x epsilon` grid; passes at `bound + 3 * standard error`.
pub fn chernoff_rows(seed: u64, n_mc: usize) -> Result<Vec<CheckRow>, AnalysisError> {
    let mut cases = Vec::new();
    for (family, mu, epsilons) in chernoff_grid() {
        for n_samples in [5u64, 20, 100] {
            for &epsilon in &epsilons {
                for tail in [Tail::Lower, Tail::Upper] {
                    cases.push((family, mu, epsilon, n_samples, tail));
                }
            }
        }
    }
    cases
        .into_par_iter()
        .enumerate()
        .map(|(i, (family, mu, epsilon, n_samples, tail))| {
            let check = chernoff_check(
                &family,
                mu,
                epsilon,
                n_samples,
                n_mc,
                seed.wrapping_add(i as u64),
                tail,
            )?;
            let side = match tail {
                Tail::Lower => "lower",
                Tail::Upper => "upper",
            };
            Ok(CheckRow {
                case: format!(
                    "{} {side}-tail mu={mu} eps={epsilon} N={n_samples}",
                    family.name()
                ),
                measured: check.freq,
                reference: check.bound + 3.0 * check.std_err,
                pass: check.freq <= check.bound + 3.0 * check.std_err,
            })
        })
        .collect()
}

/// The geometric-log series bound over the `(T, a)` grid.
pub fn geolog_rows() -> Result<Vec<CheckRow>, AnalysisError> {
    let mut rows = Vec::new();
    for t in [10u64, 100, 1_000, 10_000] {
        for a in [2.0 / t as f64, 0.01, 0.1, 1.0, 5.0] {
            if a <= 1.0 / t as f64 {
                continue;
            }
            let (lhs, rhs) = geo_log_sum_check(t, a)?;
            rows.push(CheckRow {
                case: format!("geolog T={t} a={a}"),
                measured: lhs,
                reference: rhs,
                pass: lhs <= rhs,
            });
        }
    }
    Ok(rows)
}
