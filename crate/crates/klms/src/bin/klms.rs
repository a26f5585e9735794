use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use klms::cli::{self, CheckSuite, CliError, DEFAULT_CHERNOFF_MC};

/// Bandit experiment runner: simulate KL Maillard sampling policies against
/// exponential-family instances, or run the numeric property-check suites.
#[derive(Debug, Parser)]
#[command(name = "klms", version, about)]
struct Args {
    /// Experiment config file (key = value lines; see README)
    #[arg(long, value_name = "PATH", conflicts_with = "check")]
    config: Option<PathBuf>,

    /// Check suite to run: kl_oracle, bregman, pinsker, chernoff or geolog
    #[arg(long, value_name = "SUITE")]
    check: Option<String>,

    /// Output directory (overrides the config's `out` key; checks default
    /// to the current directory)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the config's base seed (or seed the check suite)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Override the config's replication count (for the chernoff suite:
    /// Monte Carlo replications, default 100000)
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
}

fn run(args: Args) -> Result<ExitCode, CliError> {
    if let Some(suite_name) = &args.check {
        let suite = CheckSuite::parse(suite_name).ok_or_else(|| CliError::Config {
            message: format!(
                "unknown check suite `{suite_name}` (expected kl_oracle, bregman, pinsker, \
                 chernoff or geolog)"
            ),
        })?;
        let out_dir = args.out.unwrap_or_else(|| PathBuf::from("."));
        let seed = args.seed.unwrap_or(0);
        let n_mc = args.reps.unwrap_or(DEFAULT_CHERNOFF_MC);
        let outcome = cli::run_checks(suite, seed, n_mc, &out_dir)?;
        println!(
            "{}: {}/{} cases passed -> {}",
            outcome.suite,
            outcome.total - outcome.failures,
            outcome.total,
            outcome.path.display()
        );
        return Ok(if outcome.failures == 0 {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        });
    }

    if let Some(config_path) = &args.config {
        let text = std::fs::read_to_string(config_path).map_err(|source| CliError::Io {
            context: format!("reading config {}", config_path.display()),
            source,
        })?;
        let mut config = cli::parse_config(&text)?;
        if let Some(seed) = args.seed {
            config.base_seed = seed;
        }
        if let Some(reps) = args.reps {
            if reps == 0 {
                return Err(CliError::Config {
                    message: "--reps must be at least 1".to_string(),
                });
            }
            config.n_reps = reps;
        }
        let out_dir = args
            .out
            .or_else(|| config.out_dir.clone())
            .ok_or_else(|| CliError::Config {
                message: "no output directory: pass --out or set `out` in the config".to_string(),
            })?;
        cli::run_experiment(&config, &out_dir)?;
        println!("wrote {}", out_dir.join("summary.csv").display());
        return Ok(ExitCode::SUCCESS);
    }

    Err(CliError::Config {
        message: "nothing to do: pass --config PATH or --check SUITE".to_string(),
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(err) => {
            // Usage problems count as validation failures (exit 1); help and
            // version requests succeed.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
