//! Seeded Monte Carlo execution of policy-versus-instance episodes.
//!
//! Episodes are bit-reproducible from `(instance, policy, horizon, seed)`.
//! Sweeps fan replications out over a work-stealing pool but aggregate them
//! in replication order, so results are identical regardless of thread
//! count or completion order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::oped::{OpedError, OpedFamily};
use crate::policies::{klucb_select, uniform_select, PolicyError, PolicyState, TemperatureFn};

/// Replications buffered per parallel batch during a sweep. Bounds memory at
/// `REPS_PER_BATCH * horizon` floats while keeping both cores busy.
const REPS_PER_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bandit instance needs at least one arm")]
    NoArms,
    #[error("{family}: arm mean {value} is not strictly inside the mean space")]
    MeanOutOfDomain { family: &'static str, value: f64 },
    #[error("horizon {horizon} is shorter than the {arms}-arm initialization")]
    HorizonTooShort { horizon: usize, arms: usize },
    #[error("sweep needs at least one replication")]
    NoReplications,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Oped(#[from] OpedError),
}

/// A reward family plus one mean per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    family: OpedFamily,
    means: Vec<f64>,
}

impl BanditInstance {
    /// All means must lie strictly inside the family's mean space so that
    /// sampling and every divergence between arms stay finite.
    pub fn new(family: OpedFamily, means: Vec<f64>) -> Result<BanditInstance, SimError> {
        if means.is_empty() {
            return Err(SimError::NoArms);
        }
        let space = family.mean_space();
        for &mu in &means {
            if !space.contains_interior(mu) {
                return Err(SimError::MeanOutOfDomain {
                    family: family.name(),
                    value: mu,
                });
            }
        }
        Ok(BanditInstance { family, means })
    }

    pub fn family(&self) -> &OpedFamily {
        &self.family
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn best_mean(&self) -> f64 {
        self.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Suboptimality gap of every arm.
    pub fn gaps(&self) -> Vec<f64> {
        let best = self.best_mean();
        self.means.iter().map(|&mu| best - mu).collect()
    }

    pub fn label(&self) -> String {
        let means = self
            .means
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!("{}[{}]", self.family.name(), means)
    }
}

/// Arm-selection strategy driven by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// The randomized KL Maillard sampling rule.
    ExpKlMs { temperature: TemperatureFn },
    /// kl-UCB with exploration budget `ln(t) / N_a`.
    KlUcb,
    /// Uniform-random pulls.
    Uniform,
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::ExpKlMs { temperature } => format!("exp-kl-ms({})", temperature.label()),
            Policy::KlUcb => "kl-ucb".to_string(),
            Policy::Uniform => "uniform".to_string(),
        }
    }

    fn temperature(&self) -> TemperatureFn {
        match self {
            Policy::ExpKlMs { temperature } => *temperature,
            // Baselines never consult the temperature.
            _ => TemperatureFn::ShiftByOne,
        }
    }

    fn select(&self, state: &PolicyState, rng: &mut ChaCha8Rng) -> Result<usize, PolicyError> {
        match self {
            Policy::ExpKlMs { .. } => state.select_arm(rng),
            Policy::KlUcb => klucb_select(state),
            Policy::Uniform => Ok(uniform_select(state.num_arms(), rng)),
        }
    }
}

/// Pseudo-regret path of a single episode. Regret accumulates the true gap
/// of every pulled arm, not realized rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub horizon: usize,
    pub cumulative_regret: Vec<f64>,
    pub final_counts: Vec<u64>,
    pub seed: u64,
}

/// Per-time mean and sample standard deviation of cumulative regret across
/// replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub instance_label: String,
    pub policy_label: String,
    pub horizon: usize,
    pub n_reps: usize,
    pub base_seed: u64,
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
}

impl SweepResult {
    pub fn final_mean(&self) -> f64 {
        *self.mean_regret.last().expect("horizon >= 1")
    }

    pub fn final_std(&self) -> f64 {
        *self.std_regret.last().expect("horizon >= 1")
    }

    /// Standard error of the final mean.
    pub fn final_se(&self) -> f64 {
        self.final_std() / (self.n_reps as f64).sqrt()
    }
}

/// Run one episode of `policy` against `instance`.
pub fn run_episode(
    instance: &BanditInstance,
    policy: &Policy,
    horizon: usize,
    seed: u64,
) -> Result<RegretTrace, SimError> {
    let arms = instance.num_arms();
    if horizon < arms {
        return Err(SimError::HorizonTooShort { horizon, arms });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PolicyState::new(*instance.family(), policy.temperature(), arms)?;
    let gaps = instance.gaps();
    let mut cumulative = Vec::with_capacity(horizon);
    let mut regret = 0.0;
    for _ in 0..horizon {
        let arm = policy.select(&state, &mut rng)?;
        let reward = instance.family().sample(instance.means()[arm], &mut rng)?;
        state.update(arm, reward)?;
        regret += gaps[arm];
        cumulative.push(regret);
    }
    Ok(RegretTrace {
        horizon,
        cumulative_regret: cumulative,
        final_counts: state.counts().to_vec(),
        seed,
    })
}

/// Run `n_reps` replications (replication `r` is seeded `base_seed + r`) and
/// aggregate the per-time mean and standard deviation of cumulative regret.
pub fn run_sweep(
    instance: &BanditInstance,
    policy: &Policy,
    horizon: usize,
    n_reps: usize,
    base_seed: u64,
) -> Result<SweepResult, SimError> {
    if n_reps == 0 {
        return Err(SimError::NoReplications);
    }
    let mut mean = vec![0.0f64; horizon];
    let mut m2 = vec![0.0f64; horizon];
    let mut seen = 0usize;
    let mut batch_start = 0usize;
    while batch_start < n_reps {
        let batch_end = (batch_start + REPS_PER_BATCH).min(n_reps);
        let traces: Vec<RegretTrace> = (batch_start..batch_end)
            .into_par_iter()
            .map(|r| run_episode(instance, policy, horizon, base_seed.wrapping_add(r as u64)))
            .collect::<Result<_, _>>()?;
        // Welford updates run strictly in replication order, so the result
        // does not depend on how the batch was scheduled.
        for trace in &traces {
            seen += 1;
            let n = seen as f64;
            for (t, &x) in trace.cumulative_regret.iter().enumerate() {
                let delta = x - mean[t];
                mean[t] += delta / n;
                m2[t] += delta * (x - mean[t]);
            }
        }
        batch_start = batch_end;
    }
    let std = if n_reps > 1 {
        m2.iter()
            .map(|&s| (s / (n_reps as f64 - 1.0)).max(0.0).sqrt())
            .collect()
    } else {
        vec![0.0; horizon]
    };
    Ok(SweepResult {
        instance_label: instance.label(),
        policy_label: policy.label(),
        horizon,
        n_reps,
        base_seed,
        mean_regret: mean,
        std_regret: std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_arm_bernoulli() -> BanditInstance {
        BanditInstance::new(OpedFamily::bernoulli(), vec![0.9, 0.8]).unwrap()
    }

    #[test]
    fn instance_validation() {
        assert!(matches!(
            BanditInstance::new(OpedFamily::bernoulli(), vec![]),
            Err(SimError::NoArms)
        ));
        assert!(matches!(
            BanditInstance::new(OpedFamily::bernoulli(), vec![0.5, 1.0]),
            Err(SimError::MeanOutOfDomain { .. })
        ));
        let pois = OpedFamily::poisson(10.0).unwrap();
        assert!(BanditInstance::new(pois, vec![2.0, 10.0]).is_err());
        let inst = two_arm_bernoulli();
        assert_eq!(inst.gaps(), vec![0.0, 0.09999999999999998]);
        assert_eq!(inst.best_mean(), 0.9);
    }

    #[test]
    fn zero_gap_instance_has_zero_regret() {
        let inst = BanditInstance::new(OpedFamily::bernoulli(), vec![0.5, 0.5, 0.5]).unwrap();
        for policy in [
            Policy::ExpKlMs {
                temperature: TemperatureFn::ShiftByOne,
            },
            Policy::KlUcb,
            Policy::Uniform,
        ] {
            let trace = run_episode(&inst, &policy, 500, 4).unwrap();
            assert!(trace.cumulative_regret.iter().all(|&r| r == 0.0));
            assert_eq!(trace.final_counts.iter().sum::<u64>(), 500);
        }
    }

    #[test]
    fn horizon_shorter_than_arm_count_is_rejected() {
        let inst = two_arm_bernoulli();
        assert!(matches!(
            run_episode(&inst, &Policy::Uniform, 1, 0),
            Err(SimError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn initialization_prefix_is_gap_partial_sums() {
        let inst = BanditInstance::new(
            OpedFamily::gaussian(1.0).unwrap(),
            vec![1.0, 0.5, 0.0, -0.25],
        )
        .unwrap();
        let gaps = inst.gaps();
        let policy = Policy::ExpKlMs {
            temperature: TemperatureFn::ShiftByOne,
        };
        let trace = run_episode(&inst, &policy, 64, 9).unwrap();
        let mut partial = 0.0;
        for (t, &g) in gaps.iter().enumerate() {
            partial += g;
            assert_eq!(trace.cumulative_regret[t], partial);
        }
    }

    #[test]
    fn traces_are_nondecreasing_and_reproducible() {
        let inst = two_arm_bernoulli();
        let policy = Policy::ExpKlMs {
            temperature: TemperatureFn::ShiftByOne,
        };
        let a = run_episode(&inst, &policy, 2000, 42).unwrap();
        let b = run_episode(&inst, &policy, 2000, 42).unwrap();
        assert_eq!(a, b);
        let c = run_episode(&inst, &policy, 2000, 43).unwrap();
        assert_ne!(a, c);
        for w in a.cumulative_regret.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(a.final_counts.iter().sum::<u64>(), 2000);
    }

    #[test]
    fn replayed_arm_sequence_reproduces_regret_and_counts() {
        // Distinct gaps let the regret increments identify each pulled arm.
        let inst = BanditInstance::new(
            OpedFamily::gaussian(1.0).unwrap(),
            vec![1.0, 0.7, 0.1],
        )
        .unwrap();
        let gaps = inst.gaps();
        let trace = run_episode(&inst, &Policy::Uniform, 3000, 17).unwrap();
        let mut counts = vec![0u64; 3];
        let mut prev = 0.0;
        let mut replayed = 0.0;
        for &cum in &trace.cumulative_regret {
            let inc = cum - prev;
            let arm = gaps
                .iter()
                .position(|&g| (g - inc).abs() < 1e-9)
                .expect("increment matches a gap");
            counts[arm] += 1;
            replayed += gaps[arm];
            assert_eq!(replayed, cum);
            prev = cum;
        }
        assert_eq!(counts, trace.final_counts);
    }

    #[test]
    fn uniform_policy_matches_expected_regret() {
        let inst = BanditInstance::new(OpedFamily::bernoulli(), vec![0.9, 0.5, 0.4]).unwrap();
        let horizon = 10_000;
        let n_reps = 40;
        let sweep = run_sweep(&inst, &Policy::Uniform, horizon, n_reps, 1234).unwrap();
        let expected = horizon as f64 * inst.gaps().iter().sum::<f64>() / 3.0;
        let se = sweep.final_se();
        assert!(
            (sweep.final_mean() - expected).abs() <= 5.0 * se,
            "mean {} vs expected {expected} (se {se})",
            sweep.final_mean()
        );
    }

    #[test]
    fn sweep_single_rep_matches_episode() {
        let inst = two_arm_bernoulli();
        let policy = Policy::KlUcb;
        let sweep = run_sweep(&inst, &policy, 300, 1, 5).unwrap();
        let episode = run_episode(&inst, &policy, 300, 5).unwrap();
        assert_eq!(sweep.mean_regret, episode.cumulative_regret);
        assert!(sweep.std_regret.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sweep_is_identical_across_thread_counts() {
        let inst = two_arm_bernoulli();
        let policy = Policy::ExpKlMs {
            temperature: TemperatureFn::Identity,
        };
        let run_with_threads = |threads: usize| -> SweepResult {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_sweep(&inst, &policy, 400, 37, 900).unwrap())
        };
        let single = run_with_threads(1);
        let multi = run_with_threads(4);
        assert_eq!(single, multi);
    }

    #[test]
    fn sweep_std_shrinks_with_replications() {
        let inst = two_arm_bernoulli();
        let policy = Policy::Uniform;
        let small = run_sweep(&inst, &policy, 2000, 100, 7).unwrap();
        let large = run_sweep(&inst, &policy, 2000, 400, 7).unwrap();
        // Standard error of the mean shrinks like sqrt(n): quadrupling reps
        // should halve it, within statistical slack.
        let se_small = small.final_se();
        let se_large = large.final_se();
        assert!(
            se_large < 0.75 * se_small,
            "se {se_large} did not shrink from {se_small}"
        );
    }

    #[test]
    fn exp_kl_ms_beats_uniform_by_an_order_of_magnitude() {
        let inst = BanditInstance::new(OpedFamily::bernoulli(), vec![0.9, 0.1]).unwrap();
        let horizon = 10_000;
        let klms = run_sweep(
            &inst,
            &Policy::ExpKlMs {
                temperature: TemperatureFn::ShiftByOne,
            },
            horizon,
            40,
            11,
        )
        .unwrap();
        let uniform = run_sweep(&inst, &Policy::Uniform, horizon, 40, 11).unwrap();
        assert!(
            klms.final_mean() * 10.0 < uniform.final_mean(),
            "exp-kl-ms {} vs uniform {}",
            klms.final_mean(),
            uniform.final_mean()
        );
    }

    #[test]
    fn single_arm_instance_is_degenerate_but_valid() {
        let inst = BanditInstance::new(OpedFamily::bernoulli(), vec![0.5]).unwrap();
        let trace = run_episode(&inst, &Policy::Uniform, 10, 0).unwrap();
        assert_eq!(trace.final_counts, vec![10]);
        assert!(trace.cumulative_regret.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn sweep_rejects_zero_replications() {
        let inst = two_arm_bernoulli();
        assert!(matches!(
            run_sweep(&inst, &Policy::Uniform, 10, 0, 0),
            Err(SimError::NoReplications)
        ));
    }
}
