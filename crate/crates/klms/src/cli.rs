//! Config-driven experiment runner and check-suite driver behind the `klms`
//! binary.
//!
//! Experiment configs are flat `key = value` files with dotted namespaces
//! (see the README for the schema). Outputs are CSV: one regret trace per
//! policy plus a summary table keyed by a content hash of the resolved
//! config, so artifacts are traceable to their inputs. Reruns with the same
//! resolved config are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{asymptotic_constant, theorem1_bound_min, AnalysisError};
use crate::checks::{
    bregman_rows, chernoff_rows, geolog_rows, kl_oracle_rows, pinsker_rows, CheckRow,
};
use crate::oped::OpedFamily;
use crate::policies::TemperatureFn;
use crate::simulator::{run_sweep, BanditInstance, Policy, SimError};

/// Replication budget for the Chernoff suite when not overridden.
pub const DEFAULT_CHERNOFF_MC: usize = 100_000;

/// Margin fraction pinned for the summary's bound column.
const SUMMARY_BOUND_C: f64 = 0.25;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    ConfigAt { line: usize, message: String },
    #[error("config: {message}")]
    Config { message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl CliError {
    /// Exit status: 1 for check/validation failures, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Time grid on which regret traces are persisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceGrid {
    /// Every step.
    Linear,
    /// Logarithmic grid with this many points per decade, plus the horizon.
    Log { points_per_decade: u32 },
}

impl TraceGrid {
    pub fn label(&self) -> String {
        match self {
            TraceGrid::Linear => "linear".to_string(),
            TraceGrid::Log { points_per_decade } => format!("log:{points_per_decade}"),
        }
    }

    /// 1-based times to persist, deduplicated and increasing.
    pub fn times(&self, horizon: usize) -> Vec<usize> {
        match *self {
            TraceGrid::Linear => (1..=horizon).collect(),
            TraceGrid::Log { points_per_decade } => {
                let mut times = Vec::new();
                let mut j = 0u32;
                loop {
                    let t = 10f64.powf(j as f64 / points_per_decade as f64).round() as usize;
                    if t >= horizon {
                        break;
                    }
                    if times.last() != Some(&t) {
                        times.push(t);
                    }
                    j += 1;
                }
                times.push(horizon);
                times
            }
        }
    }
}

/// A fully validated experiment: instance, policies, horizon, replication
/// budget, seeding and output layout.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub instance: BanditInstance,
    pub policies: Vec<(String, Policy)>,
    pub horizon: usize,
    pub n_reps: usize,
    pub base_seed: u64,
    pub grid: TraceGrid,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Canonical serialization of everything that defines the experiment's
    /// content. The output directory is deliberately excluded so identical
    /// experiments written to different places stay byte-identical.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "instance = {}", self.instance.label());
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "reps = {}", self.n_reps);
        let _ = writeln!(s, "seed = {}", self.base_seed);
        let _ = writeln!(s, "grid = {}", self.grid.label());
        for (name, policy) in &self.policies {
            let _ = writeln!(s, "policy.{name} = {}", policy.label());
        }
        s
    }

    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

struct RawConfig {
    values: BTreeMap<String, (String, usize)>,
    policy_order: Vec<String>,
}

fn parse_raw(text: &str) -> Result<RawConfig, CliError> {
    let mut values = BTreeMap::new();
    let mut policy_order = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::ConfigAt {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(CliError::ConfigAt {
                line: line_no,
                message: "empty key or value".to_string(),
            });
        }
        if let Some(rest) = key.strip_prefix("policy.") {
            let name = rest.split('.').next().unwrap_or_default().to_string();
            if !policy_order.contains(&name) {
                policy_order.push(name);
            }
        }
        if values.insert(key.clone(), (value, line_no)).is_some() {
            return Err(CliError::ConfigAt {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(RawConfig {
        values,
        policy_order,
    })
}

fn missing(key: &str) -> CliError {
    CliError::Config {
        message: format!("missing required key `{key}`"),
    }
}

fn bad_value(line: usize, key: &str, detail: impl std::fmt::Display) -> CliError {
    CliError::ConfigAt {
        line,
        message: format!("invalid value for `{key}`: {detail}"),
    }
}

struct RawReader {
    raw: RawConfig,
    consumed: Vec<String>,
}

impl RawReader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.consumed.push(key.to_string());
        self.raw.values.get(key).cloned()
    }

    fn require(&mut self, key: &str) -> Result<(String, usize), CliError> {
        self.take(key).ok_or_else(|| missing(key))
    }

    fn parse_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<(T, usize), CliError>
    where
        T::Err: std::fmt::Display,
    {
        let (value, line) = self.require(key)?;
        value
            .parse::<T>()
            .map(|v| (v, line))
            .map_err(|e| bad_value(line, key, e))
    }

    fn leftover(&self) -> Option<(&String, usize)> {
        self.raw
            .values
            .iter()
            .find(|(k, _)| !self.consumed.contains(k))
            .map(|(k, (_, line))| (k, *line))
    }
}

fn parse_family(reader: &mut RawReader) -> Result<OpedFamily, CliError> {
    let (kind, line) = reader.require("instance.family")?;
    let mut param = |key: &str| -> Result<f64, CliError> {
        let (value, l) = reader.require(key)?;
        value.parse::<f64>().map_err(|e| bad_value(l, key, e))
    };
    let family = match kind.as_str() {
        "bernoulli" => Ok(OpedFamily::bernoulli()),
        "poisson" => OpedFamily::poisson(param("instance.cap")?),
        "gaussian" => OpedFamily::gaussian(param("instance.sigma")?),
        "gamma" => OpedFamily::gamma(param("instance.shape")?, param("instance.cap")?),
        "inverse-gaussian" => {
            OpedFamily::inverse_gaussian(param("instance.lambda")?, param("instance.cap")?)
        }
        other => {
            return Err(bad_value(
                line,
                "instance.family",
                format!(
                    "unknown family `{other}` (expected bernoulli, poisson, gaussian, gamma \
                     or inverse-gaussian)"
                ),
            ))
        }
    }
    .map_err(|e| bad_value(line, "instance.family", e))?;
    Ok(family)
}

fn parse_temperature(value: &str, line: usize) -> Result<TemperatureFn, CliError> {
    match value {
        "shift-by-one" => Ok(TemperatureFn::ShiftByOne),
        "identity" => Ok(TemperatureFn::Identity),
        other => {
            if let Some(d) = other.strip_prefix("scaled:") {
                let d: f64 = d
                    .parse()
                    .map_err(|e| bad_value(line, "temperature", e))?;
                TemperatureFn::scaled(d).map_err(|e| bad_value(line, "temperature", e))
            } else {
                Err(bad_value(
                    line,
                    "temperature",
                    format!("unknown temperature `{other}` (expected shift-by-one, identity or scaled:<d>)"),
                ))
            }
        }
    }
}

/// Parse and validate an experiment config file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw = parse_raw(text)?;
    let policy_order = raw.policy_order.clone();
    let mut reader = RawReader {
        raw,
        consumed: Vec::new(),
    };

    let family = parse_family(&mut reader)?;
    let (means_text, means_line) = reader.require("instance.means")?;
    let means: Vec<f64> = means_text
        .split(',')
        .map(|m| m.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad_value(means_line, "instance.means", e))?;
    let instance = BanditInstance::new(family, means)
        .map_err(|e| bad_value(means_line, "instance.means", e))?;

    let (horizon, horizon_line) = reader.parse_num::<usize>("horizon")?;
    if horizon < instance.num_arms() {
        return Err(bad_value(
            horizon_line,
            "horizon",
            format!(
                "must cover the {}-arm initialization round",
                instance.num_arms()
            ),
        ));
    }
    let (n_reps, reps_line) = reader.parse_num::<usize>("reps")?;
    if n_reps == 0 {
        return Err(bad_value(reps_line, "reps", "must be at least 1"));
    }
    let (base_seed, _) = reader.parse_num::<u64>("seed")?;

    let grid = match reader.take("grid") {
        None => TraceGrid::Log {
            points_per_decade: 20,
        },
        Some((value, line)) => match value.as_str() {
            "linear" => TraceGrid::Linear,
            "log" => TraceGrid::Log {
                points_per_decade: 20,
            },
            other => {
                let ppd = other
                    .strip_prefix("log:")
                    .and_then(|n| n.parse::<u32>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| {
                        bad_value(line, "grid", "expected `linear`, `log` or `log:<n>`")
                    })?;
                TraceGrid::Log {
                    points_per_decade: ppd,
                }
            }
        },
    };

    let out_dir = reader.take("out").map(|(value, _)| PathBuf::from(value));

    if policy_order.is_empty() {
        return Err(missing("policy.<name>.kind"));
    }
    let mut policies = Vec::new();
    for name in &policy_order {
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(CliError::Config {
                message: format!(
                    "policy name `{name}` must be nonempty and use only [A-Za-z0-9_-]"
                ),
            });
        }
        let (kind, kind_line) = reader.require(&format!("policy.{name}.kind"))?;
        let temperature = reader.take(&format!("policy.{name}.temperature"));
        let policy = match kind.as_str() {
            "exp-kl-ms" => {
                let temp = match temperature {
                    None => TemperatureFn::ShiftByOne,
                    Some((value, line)) => parse_temperature(&value, line)?,
                };
                Policy::ExpKlMs { temperature: temp }
            }
            "kl-ucb" | "uniform" => {
                if let Some((_, line)) = temperature {
                    return Err(CliError::ConfigAt {
                        line,
                        message: format!("policy `{name}` of kind `{kind}` takes no temperature"),
                    });
                }
                if kind == "kl-ucb" {
                    Policy::KlUcb
                } else {
                    Policy::Uniform
                }
            }
            other => {
                return Err(bad_value(
                    kind_line,
                    &format!("policy.{name}.kind"),
                    format!("unknown policy kind `{other}` (expected exp-kl-ms, kl-ucb or uniform)"),
                ))
            }
        };
        policies.push((name.clone(), policy));
    }

    if let Some((key, line)) = reader.leftover() {
        return Err(CliError::ConfigAt {
            line,
            message: format!("unknown key `{key}`"),
        });
    }

    Ok(ExperimentConfig {
        instance,
        policies,
        horizon,
        n_reps,
        base_seed,
        grid,
        out_dir,
    })
}

/// Twelve-plus significant digits, round-trippable at the printed precision.
fn fmt_float(x: f64) -> String {
    format!("{x:.12e}")
}

/// Run every policy in the config and write `trace_<policy>.csv` per policy
/// plus `summary.csv` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(format!(
        "creating output directory {}",
        out_dir.display()
    )))?;
    let times = config.grid.times(config.horizon);
    let mut summary = String::new();
    let _ = writeln!(summary, "# config_hash={}", config.content_hash());
    let _ = writeln!(
        summary,
        "policy,T,final_mean_regret,final_std,asymptotic_constant,theorem1_bound"
    );
    let asym = asymptotic_constant(&config.instance)?;
    let bound = theorem1_bound_min(&config.instance, config.horizon as u64, SUMMARY_BOUND_C)?;
    for (name, policy) in &config.policies {
        let sweep = run_sweep(
            &config.instance,
            policy,
            config.horizon,
            config.n_reps,
            config.base_seed,
        )?;
        let mut trace = String::new();
        let _ = writeln!(trace, "t,mean_regret,std_regret,n_reps");
        for &t in &times {
            let _ = writeln!(
                trace,
                "{t},{},{},{}",
                fmt_float(sweep.mean_regret[t - 1]),
                fmt_float(sweep.std_regret[t - 1]),
                config.n_reps
            );
        }
        let trace_path = out_dir.join(format!("trace_{name}.csv"));
        fs::write(&trace_path, trace)
            .map_err(io_err(format!("writing {}", trace_path.display())))?;
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{}",
            config.horizon,
            fmt_float(sweep.final_mean()),
            fmt_float(sweep.final_std()),
            fmt_float(asym),
            fmt_float(bound.value)
        );
        eprintln!(
            "{}: {} over {} reps, final mean regret {:.4}",
            name,
            sweep.policy_label,
            config.n_reps,
            sweep.final_mean()
        );
    }
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary)
        .map_err(io_err(format!("writing {}", summary_path.display())))?;
    Ok(())
}

/// A named property-check suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckSuite {
    KlOracle,
    Bregman,
    Pinsker,
    Chernoff,
    GeoLog,
}

impl CheckSuite {
    pub const ALL: [CheckSuite; 5] = [
        CheckSuite::KlOracle,
        CheckSuite::Bregman,
        CheckSuite::Pinsker,
        CheckSuite::Chernoff,
        CheckSuite::GeoLog,
    ];

    pub fn parse(name: &str) -> Option<CheckSuite> {
        match name {
            "kl_oracle" => Some(CheckSuite::KlOracle),
            "bregman" => Some(CheckSuite::Bregman),
            "pinsker" => Some(CheckSuite::Pinsker),
            "chernoff" => Some(CheckSuite::Chernoff),
            "geolog" => Some(CheckSuite::GeoLog),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CheckSuite::KlOracle => "kl_oracle",
            CheckSuite::Bregman => "bregman",
            CheckSuite::Pinsker => "pinsker",
            CheckSuite::Chernoff => "chernoff",
            CheckSuite::GeoLog => "geolog",
        }
    }
}

/// Result of one check-suite run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub total: usize,
    pub failures: usize,
    pub path: PathBuf,
}

/// Run a check suite and write `checks_<suite>.csv` into `out_dir`.
pub fn run_checks(
    suite: CheckSuite,
    seed: u64,
    n_mc: usize,
    out_dir: &Path,
) -> Result<CheckOutcome, CliError> {
    let rows: Vec<CheckRow> = match suite {
        CheckSuite::KlOracle => kl_oracle_rows()?,
        CheckSuite::Bregman => bregman_rows(seed)?,
        CheckSuite::Pinsker => pinsker_rows()?,
        CheckSuite::Chernoff => chernoff_rows(seed, n_mc)?,
        CheckSuite::GeoLog => geolog_rows()?,
    };
    fs::create_dir_all(out_dir).map_err(io_err(format!(
        "creating output directory {}",
        out_dir.display()
    )))?;
    let path = out_dir.join(format!("checks_{}.csv", suite.name()));
    let file = fs::File::create(&path).map_err(io_err(format!("writing {}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let mut failures = 0usize;
    writeln!(w, "case,measured,reference,pass").map_err(io_err("writing check rows"))?;
    for row in &rows {
        if !row.pass {
            failures += 1;
        }
        writeln!(
            w,
            "{},{},{},{}",
            row.case,
            fmt_float(row.measured),
            fmt_float(row.reference),
            if row.pass { "pass" } else { "fail" }
        )
        .map_err(io_err("writing check rows"))?;
    }
    w.flush().map_err(io_err("writing check rows"))?;
    Ok(CheckOutcome {
        suite: suite.name(),
        total: rows.len(),
        failures,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# two-arm benchmark
instance.family = bernoulli
instance.means = 0.9, 0.8
horizon = 100
reps = 3
seed = 7
grid = log:20

policy.klms.kind = exp-kl-ms
policy.klms.temperature = shift-by-one
policy.unif.kind = uniform
";

    #[test]
    fn parses_a_full_config() {
        let config = parse_config(GOOD).unwrap();
        assert_eq!(config.horizon, 100);
        assert_eq!(config.n_reps, 3);
        assert_eq!(config.base_seed, 7);
        assert_eq!(config.grid, TraceGrid::Log { points_per_decade: 20 });
        assert_eq!(config.policies.len(), 2);
        assert_eq!(config.policies[0].0, "klms");
        assert_eq!(
            config.policies[0].1,
            Policy::ExpKlMs {
                temperature: TemperatureFn::ShiftByOne
            }
        );
        assert_eq!(config.policies[1].1, Policy::Uniform);
        assert!(config.out_dir.is_none());
    }

    #[test]
    fn missing_means_names_the_key() {
        let text = GOOD.replace("instance.means = 0.9, 0.8\n", "");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("instance.means"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bad_lines_are_numbered() {
        let text = GOOD.replace("horizon = 100", "horizon = ten");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, CliError::ConfigAt { line: 4, .. }), "{err}");

        let text = GOOD.replace("reps = 3", "reps, 3");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, CliError::ConfigAt { line: 5, .. }), "{err}");

        let text = format!("{GOOD}policy.klms.kind = exp-kl-ms\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{GOOD}mystery = 1\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn family_parameters_are_family_specific() {
        let text = GOOD
            .replace("instance.family = bernoulli", "instance.family = gaussian")
            .replace("instance.means = 0.9, 0.8", "instance.means = 1.0, 0.0");
        // Gaussian needs sigma.
        assert!(parse_config(&text).unwrap_err().to_string().contains("instance.sigma"));
        let with_sigma = format!("{text}instance.sigma = 1.0\n");
        assert!(parse_config(&with_sigma).is_ok());
        // Bernoulli must not carry sigma.
        let text = format!("{GOOD}instance.sigma = 1.0\n");
        assert!(parse_config(&text).unwrap_err().to_string().contains("instance.sigma"));
    }

    #[test]
    fn horizon_must_cover_initialization() {
        let text = GOOD.replace("horizon = 100", "horizon = 1");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, CliError::ConfigAt { line: 4, .. }), "{err}");
    }

    #[test]
    fn scaled_temperature_and_baseline_restrictions() {
        let text = GOOD.replace(
            "policy.klms.temperature = shift-by-one",
            "policy.klms.temperature = scaled:2",
        );
        let config = parse_config(&text).unwrap();
        assert_eq!(
            config.policies[0].1,
            Policy::ExpKlMs {
                temperature: TemperatureFn::scaled(2.0).unwrap()
            }
        );
        let text = format!("{GOOD}policy.unif.temperature = identity\n");
        assert!(parse_config(&text)
            .unwrap_err()
            .to_string()
            .contains("takes no temperature"));
    }

    #[test]
    fn content_hash_tracks_content_not_location() {
        let a = parse_config(GOOD).unwrap();
        let mut b = parse_config(GOOD).unwrap();
        b.out_dir = Some(PathBuf::from("/somewhere/else"));
        assert_eq!(a.content_hash(), b.content_hash());
        let c = parse_config(&GOOD.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn log_grid_times() {
        let grid = TraceGrid::Log {
            points_per_decade: 20,
        };
        let times = grid.times(1000);
        assert_eq!(*times.first().unwrap(), 1);
        assert_eq!(*times.last().unwrap(), 1000);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!(times.len() < 70);
        let linear = TraceGrid::Linear.times(5);
        assert_eq!(linear, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn suite_names_round_trip() {
        for suite in CheckSuite::ALL {
            assert_eq!(CheckSuite::parse(suite.name()), Some(suite));
        }
        assert_eq!(CheckSuite::parse("nope"), None);
    }

    #[test]
    fn floats_round_trip_at_printed_precision() {
        for x in [0.0, 1.0 / 3.0, 123456.789, 1e-15, f64::INFINITY] {
            let printed = fmt_float(x);
            let parsed: f64 = printed.parse().unwrap();
            assert_eq!(fmt_float(parsed), printed);
        }
    }
}
