//! One-parameter exponential-family reward models with identity sufficient
//! statistic, parameterized by their mean.
//!
//! Five families are supported: Bernoulli, Poisson, Gaussian with fixed
//! standard deviation, Gamma with fixed shape, and inverse Gaussian with
//! fixed shape parameter lambda. Each family exposes its variance function
//! `V(mu)`, natural-parameter map, closed-form KL divergence between two
//! members, a quadrature oracle for the KL integral form, tail/lower-bound
//! helpers, and reward sampling.
//!
//! The capped families (Poisson, Gamma, inverse Gaussian) carry a mean cap
//! `M` that bounds the *instance* mean space `(0, M)` and yields finite
//! `variance_max` / Lipschitz constants. Empirical means observed by a
//! policy can drift above `M`, so `kl`, `natural_param` and `variance`
//! validate against the family's natural domain instead of the cap; the cap
//! is enforced where instance means enter (bandit construction, bound
//! evaluation, the quadrature oracle).

use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, Normal, Poisson};
use thiserror::Error;

/// Absolute tolerance for the adaptive KL quadrature oracle.
pub const QUAD_TOL: f64 = 1e-10;
/// Interval-split budget for the quadrature oracle.
pub const QUAD_MAX_SPLITS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpedError {
    #[error("{family}: mean {value} outside {domain}")]
    Domain {
        family: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("{family}: parameter {name} must be positive and finite, got {value}")]
    Parameter {
        family: &'static str,
        name: &'static str,
        value: f64,
    },
    #[error("quadrature did not converge to {tol:e} within {splits} interval splits")]
    QuadratureNoConvergence { tol: f64, splits: u64 },
    #[error("{family}: lower-bound mode {mode} requires a finite variance maximum")]
    UnsupportedMode {
        family: &'static str,
        mode: &'static str,
    },
}

/// Interval of valid means for a family. Only the Bernoulli space is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSpace {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl MeanSpace {
    /// Strict interior of the interval.
    pub fn contains_interior(&self, mu: f64) -> bool {
        mu.is_finite() && mu > self.lo && mu < self.hi
    }

    /// Closure of the interval (admits boundary values).
    pub fn contains_closure(&self, mu: f64) -> bool {
        !mu.is_nan() && mu >= self.lo && mu <= self.hi
    }
}

/// Mode selector for [`OpedFamily::kl_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlLowerBoundMode {
    /// Lipschitz form: max of `d^2 / (2 (V(mu) + C_L d))` over the two means.
    Lipschitz,
    /// Max-variance form: `d^2 / (2 Vbar)`.
    MaxVariance,
}

/// A reward-distribution family, fully determined by its fixed parameters.
/// The per-arm member is selected by its mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpedFamily {
    Bernoulli,
    Poisson { cap: f64 },
    Gaussian { sigma: f64 },
    Gamma { shape: f64, cap: f64 },
    InverseGaussian { lambda: f64, cap: f64 },
}

fn require_positive(
    family: &'static str,
    name: &'static str,
    value: f64,
) -> Result<(), OpedError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(OpedError::Parameter {
            family,
            name,
            value,
        })
    }
}

impl OpedFamily {
    pub fn bernoulli() -> OpedFamily {
        OpedFamily::Bernoulli
    }

    pub fn poisson(cap: f64) -> Result<OpedFamily, OpedError> {
        require_positive("poisson", "cap", cap)?;
        Ok(OpedFamily::Poisson { cap })
    }

    pub fn gaussian(sigma: f64) -> Result<OpedFamily, OpedError> {
        require_positive("gaussian", "sigma", sigma)?;
        Ok(OpedFamily::Gaussian { sigma })
    }

    pub fn gamma(shape: f64, cap: f64) -> Result<OpedFamily, OpedError> {
        require_positive("gamma", "shape", shape)?;
        require_positive("gamma", "cap", cap)?;
        Ok(OpedFamily::Gamma { shape, cap })
    }

    pub fn inverse_gaussian(lambda: f64, cap: f64) -> Result<OpedFamily, OpedError> {
        require_positive("inverse-gaussian", "lambda", lambda)?;
        require_positive("inverse-gaussian", "cap", cap)?;
        Ok(OpedFamily::InverseGaussian { lambda, cap })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpedFamily::Bernoulli => "bernoulli",
            OpedFamily::Poisson { .. } => "poisson",
            OpedFamily::Gaussian { .. } => "gaussian",
            OpedFamily::Gamma { .. } => "gamma",
            OpedFamily::InverseGaussian { .. } => "inverse-gaussian",
        }
    }

    /// Valid instance means: `[0, 1]` for Bernoulli, `(0, M)` for the capped
    /// families, all reals for Gaussian.
    pub fn mean_space(&self) -> MeanSpace {
        match *self {
            OpedFamily::Bernoulli => MeanSpace {
                lo: 0.0,
                hi: 1.0,
                closed: true,
            },
            OpedFamily::Poisson { cap }
            | OpedFamily::Gamma { cap, .. }
            | OpedFamily::InverseGaussian { cap, .. } => MeanSpace {
                lo: 0.0,
                hi: cap,
                closed: false,
            },
            OpedFamily::Gaussian { .. } => MeanSpace {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                closed: false,
            },
        }
    }

    /// Supremum of `V(mu)` over the mean space, when finite. Finite for all
    /// five families here because the capped families require `M` at
    /// construction.
    pub fn variance_max(&self) -> Option<f64> {
        match *self {
            OpedFamily::Bernoulli => Some(0.25),
            OpedFamily::Poisson { cap } => Some(cap),
            OpedFamily::Gaussian { sigma } => Some(sigma * sigma),
            OpedFamily::Gamma { shape, cap } => Some(cap * cap / shape),
            OpedFamily::InverseGaussian { lambda, cap } => Some(cap * cap * cap / lambda),
        }
    }

    /// Lipschitz constant of the variance function on the mean space.
    pub fn lipschitz_constant(&self) -> f64 {
        match *self {
            OpedFamily::Bernoulli => 1.0,
            OpedFamily::Poisson { .. } => 1.0,
            OpedFamily::Gaussian { .. } => 0.0,
            OpedFamily::Gamma { shape, cap } => 2.0 * cap / shape,
            OpedFamily::InverseGaussian { lambda, cap } => 3.0 * cap * cap / lambda,
        }
    }

    // Natural domain: where the family member with that mean exists. This is
    // wider than `mean_space` for the capped families, since empirical means
    // are not bounded by the cap.
    fn in_natural_interior(&self, mu: f64) -> bool {
        if !mu.is_finite() {
            return false;
        }
        match self {
            OpedFamily::Bernoulli => mu > 0.0 && mu < 1.0,
            OpedFamily::Poisson { .. }
            | OpedFamily::Gamma { .. }
            | OpedFamily::InverseGaussian { .. } => mu > 0.0,
            OpedFamily::Gaussian { .. } => true,
        }
    }

    fn in_natural_closure(&self, mu: f64) -> bool {
        if mu.is_nan() {
            return false;
        }
        match self {
            OpedFamily::Bernoulli => (0.0..=1.0).contains(&mu),
            OpedFamily::Poisson { .. }
            | OpedFamily::Gamma { .. }
            | OpedFamily::InverseGaussian { .. } => mu >= 0.0 && mu.is_finite(),
            OpedFamily::Gaussian { .. } => mu.is_finite(),
        }
    }

    fn domain_error(&self, mu: f64, domain: &'static str) -> OpedError {
        OpedError::Domain {
            family: self.name(),
            value: mu,
            domain,
        }
    }

    /// Variance `V(mu)` of the member with mean `mu`.
    pub fn variance(&self, mu: f64) -> Result<f64, OpedError> {
        if !self.in_natural_interior(mu) {
            return Err(self.domain_error(mu, "variance domain (interior means only)"));
        }
        Ok(self.variance_unchecked(mu))
    }

    fn variance_unchecked(&self, mu: f64) -> f64 {
        match *self {
            OpedFamily::Bernoulli => mu * (1.0 - mu),
            OpedFamily::Poisson { .. } => mu,
            OpedFamily::Gaussian { sigma } => sigma * sigma,
            OpedFamily::Gamma { shape, .. } => mu * mu / shape,
            OpedFamily::InverseGaussian { lambda, .. } => mu * mu * mu / lambda,
        }
    }

    /// Natural parameter `theta` of the member with mean `mu`.
    pub fn natural_param(&self, mu: f64) -> Result<f64, OpedError> {
        if !self.in_natural_interior(mu) {
            return Err(self.domain_error(mu, "natural-parameter domain (interior means only)"));
        }
        Ok(match *self {
            OpedFamily::Bernoulli => (mu / (1.0 - mu)).ln(),
            OpedFamily::Poisson { .. } => mu.ln(),
            OpedFamily::Gaussian { sigma } => mu / (sigma * sigma),
            OpedFamily::Gamma { shape, .. } => -shape / mu,
            OpedFamily::InverseGaussian { lambda, .. } => -lambda / (2.0 * mu * mu),
        })
    }

    /// KL divergence `kl(mu1, mu2)` between the members with means `mu1`
    /// and `mu2`, in closed form. Boundary means are mapped to their
    /// analytic limits; divergent limits return `+inf`.
    pub fn kl(&self, mu1: f64, mu2: f64) -> Result<f64, OpedError> {
        if !self.in_natural_closure(mu1) {
            return Err(self.domain_error(mu1, "kl domain"));
        }
        if !self.in_natural_closure(mu2) {
            return Err(self.domain_error(mu2, "kl domain"));
        }
        if mu1 == mu2 {
            return Ok(0.0);
        }
        Ok(match *self {
            OpedFamily::Bernoulli => {
                if mu2 == 0.0 || mu2 == 1.0 {
                    // mu1 != mu2, so the support mismatch diverges.
                    f64::INFINITY
                } else if mu1 == 0.0 {
                    -(1.0 - mu2).ln()
                } else if mu1 == 1.0 {
                    -mu2.ln()
                } else {
                    mu1 * (mu1 / mu2).ln() + (1.0 - mu1) * ((1.0 - mu1) / (1.0 - mu2)).ln()
                }
            }
            OpedFamily::Poisson { .. } => {
                if mu2 == 0.0 {
                    f64::INFINITY
                } else if mu1 == 0.0 {
                    mu2
                } else {
                    mu2 - mu1 + mu1 * (mu1 / mu2).ln()
                }
            }
            OpedFamily::Gaussian { sigma } => {
                let d = mu1 - mu2;
                d * d / (2.0 * sigma * sigma)
            }
            OpedFamily::Gamma { shape, .. } => {
                if mu1 == 0.0 || mu2 == 0.0 {
                    f64::INFINITY
                } else {
                    let r = mu1 / mu2;
                    shape * (r - 1.0 - r.ln())
                }
            }
            OpedFamily::InverseGaussian { lambda, .. } => {
                if mu1 == 0.0 || mu2 == 0.0 {
                    f64::INFINITY
                } else {
                    let d = mu1 - mu2;
                    lambda * d * d / (2.0 * mu1 * mu2 * mu2)
                }
            }
        })
    }

    /// Oracle for [`OpedFamily::kl`]: adaptive quadrature of the integral
    /// form `kl(mu, mu') = int_mu^mu' (x - mu) / V(x) dx`.
    pub fn kl_quadrature(&self, mu1: f64, mu2: f64) -> Result<f64, OpedError> {
        let space = self.mean_space();
        if !space.contains_interior(mu1) {
            return Err(self.domain_error(mu1, "quadrature domain (mean-space interior)"));
        }
        if !space.contains_interior(mu2) {
            return Err(self.domain_error(mu2, "quadrature domain (mean-space interior)"));
        }
        if mu1 == mu2 {
            return Ok(0.0);
        }
        // Orient the interval; the signed integral flips with it.
        let (lo, hi, sign) = if mu1 < mu2 {
            (mu1, mu2, 1.0)
        } else {
            (mu2, mu1, -1.0)
        };
        let f = |x: f64| (x - mu1) / self.variance_unchecked(x);
        let mut splits = 0u64;
        let fl = f(lo);
        let fm = f(0.5 * (lo + hi));
        let fh = f(hi);
        let whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh);
        let value = adaptive_simpson(&f, lo, hi, fl, fm, fh, whole, QUAD_TOL, 0, &mut splits)?;
        Ok(sign * value)
    }

    /// Residual of the Bregman three-point identity; identically zero up to
    /// floating-point error.
    pub fn bregman_residual(&self, mu_a: f64, mu_b: f64, mu_c: f64) -> Result<f64, OpedError> {
        let kl_ab = self.kl(mu_a, mu_b)?;
        let kl_bc = self.kl(mu_b, mu_c)?;
        let kl_ac = self.kl(mu_a, mu_c)?;
        let theta_b = self.natural_param(mu_b)?;
        let theta_c = self.natural_param(mu_c)?;
        Ok(kl_ab + kl_bc - kl_ac + (mu_b - mu_a) * (theta_c - theta_b))
    }

    /// Pinsker-style lower bound on `kl(mu1, mu2)` with `d = |mu1 - mu2|`.
    pub fn kl_lower_bound(
        &self,
        mu1: f64,
        mu2: f64,
        mode: KlLowerBoundMode,
    ) -> Result<f64, OpedError> {
        let space = self.mean_space();
        if !space.contains_closure(mu1) {
            return Err(self.domain_error(mu1, "mean space"));
        }
        if !space.contains_closure(mu2) {
            return Err(self.domain_error(mu2, "mean space"));
        }
        let d = (mu1 - mu2).abs();
        if d == 0.0 {
            return Ok(0.0);
        }
        match mode {
            KlLowerBoundMode::Lipschitz => {
                let cl = self.lipschitz_constant();
                let b1 = d * d / (2.0 * (self.variance_unchecked(mu1) + cl * d));
                let b2 = d * d / (2.0 * (self.variance_unchecked(mu2) + cl * d));
                Ok(b1.max(b2))
            }
            KlLowerBoundMode::MaxVariance => {
                let vbar = self.variance_max().ok_or(OpedError::UnsupportedMode {
                    family: self.name(),
                    mode: "max-variance",
                })?;
                Ok(d * d / (2.0 * vbar))
            }
        }
    }

    /// Draw one reward from the member with mean `mu`.
    pub fn sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<f64, OpedError> {
        let space = self.mean_space();
        let ok = if space.closed {
            space.contains_closure(mu)
        } else {
            space.contains_interior(mu)
        };
        if !ok {
            return Err(self.domain_error(mu, "sampling domain"));
        }
        Ok(match *self {
            OpedFamily::Bernoulli => {
                if rng.gen::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            OpedFamily::Poisson { .. } => {
                let dist = Poisson::new(mu).expect("validated mean");
                dist.sample(rng)
            }
            OpedFamily::Gaussian { sigma } => {
                let dist = Normal::new(mu, sigma).expect("validated parameters");
                dist.sample(rng)
            }
            OpedFamily::Gamma { shape, .. } => {
                let dist = Gamma::new(shape, mu / shape).expect("validated parameters");
                dist.sample(rng)
            }
            OpedFamily::InverseGaussian { lambda, .. } => {
                let dist = InverseGaussian::new(mu, lambda).expect("validated parameters");
                dist.sample(rng)
            }
        })
    }
}

/// One recursion step of adaptive Simpson with Richardson correction.
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    splits: &mut u64,
) -> Result<f64, OpedError> {
    let mid = 0.5 * (lo + hi);
    let lmid = 0.5 * (lo + mid);
    let rmid = 0.5 * (mid + hi);
    let flm = f(lmid);
    let frm = f(rmid);
    let left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    let right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    let refined = left + right;
    // A few forced levels guard against symmetric integrands that fool the
    // first error estimate.
    if depth >= 4 && (refined - whole).abs() <= 15.0 * tol {
        return Ok(refined + (refined - whole) / 15.0);
    }
    *splits += 1;
    if *splits > QUAD_MAX_SPLITS {
        return Err(OpedError::QuadratureNoConvergence {
            tol: QUAD_TOL,
            splits: QUAD_MAX_SPLITS,
        });
    }
    let half_tol = 0.5 * tol;
    let l = adaptive_simpson(f, lo, mid, flo, flm, fmid, left, half_tol, depth + 1, splits)?;
    let r = adaptive_simpson(f, mid, hi, fmid, frm, fhi, right, half_tol, depth + 1, splits)?;
    Ok(l + r)
}
