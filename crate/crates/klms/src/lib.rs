//! Randomized KL Maillard sampling bandit policies over one-parameter
//! exponential-family rewards, with exact divergence analytics, regret-bound
//! evaluators, and a seeded Monte Carlo simulator.
//!
//! Layout:
//! - [`oped`]: reward families (variance function, natural parameters, KL
//!   divergence and its quadrature oracle, tail/lower bounds, sampling).
//! - [`policies`]: the sampling rule with pluggable inverse temperature,
//!   plus kl-UCB and uniform baselines.
//! - [`simulator`]: reproducible episodes and replication sweeps.
//! - [`analysis`]: regret-bound and corollary evaluators, Chernoff tail
//!   checks, the geometric-log series bound.
//! - [`checks`]: grid-based property suites over all families.
//! - [`cli`]: config parsing and the CSV experiment/check runners.

pub mod analysis;
pub mod checks;
pub mod cli;
pub mod oped;
pub mod policies;
pub mod simulator;

pub use analysis::{
    asymptotic_constant, chernoff_check, geo_log_sum_check, minimax_bound, theorem1_bound,
    theorem1_bound_min, BoundReport, MinimaxFlavor, Tail,
};
pub use oped::{KlLowerBoundMode, OpedFamily};
pub use policies::{PolicyState, TemperatureFn};
pub use simulator::{run_episode, run_sweep, BanditInstance, Policy, RegretTrace, SweepResult};
