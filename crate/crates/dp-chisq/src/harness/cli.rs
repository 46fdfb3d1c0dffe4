//! Command-line interface.
//!
//! Subcommands: `gof` and `indep` run a single test on a CSV table and print
//! a JSON report; `critical-value` prints the asymptotic threshold for a
//! configuration; `simulate-significance` and `simulate-power` run sweeps
//! from a JSON config and print CSV. Exit codes: 0 success, 1 validation
//! error, 2 numeric error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::{gof_null_diagnostics, indep_null_distribution};
use crate::denoise::ProjectionConfig;
use crate::error::{Error, Result};
use crate::model::{CountTable, ProbabilityVector, Table};
use crate::privacy::{add_noise, PrivacyParams};
use crate::testing::{
    gof_classical, indep_classical, mc_gof, mc_indep, priv_gof, priv_indep, priv_gof_critical_value,
    TestOutcome,
};

#[derive(Parser)]
#[command(
    name = "dp-chisq",
    version,
    about = "Differentially private chi-squared tests for categorical data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Goodness-of-fit test on a CSV count table
    Gof(GofArgs),
    /// Independence test on a CSV contingency table
    Indep(IndepArgs),
    /// Print the critical value for a test configuration
    CriticalValue(CriticalValueArgs),
    /// Empirical significance sweep from a JSON config (CSV to stdout)
    SimulateSignificance(SimulateArgs),
    /// Empirical power sweep from a JSON config (CSV to stdout)
    SimulatePower(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    /// No noise: the classical test on the raw table.
    None,
    Laplace,
    Gauss,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Pick by mechanism: none -> classical, laplace -> mc, gauss -> priv.
    Auto,
    /// Classical test; with a mechanism set, it runs on the noisy counts.
    Classical,
    /// Monte-Carlo private test.
    Mc,
    /// Asymptotic private test (Gaussian only).
    Priv,
}

#[derive(Args)]
struct GofArgs {
    /// CSV file holding the counts (header row optional)
    #[arg(long)]
    table: PathBuf,
    /// Null distribution: "uniform" or comma-separated probabilities
    #[arg(long)]
    p0: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = MechanismArg::None)]
    mech: MechanismArg,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Monte-Carlo sample count
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct IndepArgs {
    /// CSV file holding the r x c contingency table (header row optional)
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = MechanismArg::None)]
    mech: MechanismArg,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Monte-Carlo sample count
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Elastic-net mix for the denoiser (defaults by mechanism)
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CriticalValueArgs {
    /// Dimension for --uniform
    #[arg(long)]
    d: Option<usize>,
    /// Uniform null distribution
    #[arg(long)]
    uniform: bool,
    /// Explicit null distribution as comma-separated probabilities
    #[arg(long)]
    p0: Option<String>,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Independence threshold at the given marginals instead
    #[arg(long)]
    indep: bool,
    /// Row marginals, comma-separated (with --indep)
    #[arg(long)]
    pi1: Option<String>,
    /// Column marginals, comma-separated (with --indep)
    #[arg(long)]
    pi2: Option<String>,
    /// Write the covariance, weight matrix, and weights as JSON
    #[arg(long)]
    dump_matrices: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override the trial count
    #[arg(long)]
    trials: Option<u32>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Override the sample-size grid, comma-separated
    #[arg(long)]
    n_grid: Option<String>,
    /// Record per-trial failures in a column instead of aborting
    #[arg(long)]
    skip_failures: bool,
}

/// Entry point shared by the binary and the CLI tests. Returns the process
/// exit code: 0 success, 1 validation error, 2 numeric error.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors go to stderr with the validation exit code.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(output) => {
            print!("{output}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Gof(args) => run_gof(args),
        Command::Indep(args) => run_indep(args),
        Command::CriticalValue(args) => run_critical_value(args),
        Command::SimulateSignificance(args) => run_simulation(args, true),
        Command::SimulatePower(args) => run_simulation(args, false),
    }
}

#[derive(Serialize)]
struct SingleTestReport {
    test: &'static str,
    n: u64,
    alpha: f64,
    #[serde(flatten)]
    outcome: TestOutcome,
}

fn report(test: &'static str, n: u64, alpha: f64, outcome: TestOutcome) -> Result<String> {
    let report = SingleTestReport {
        test,
        n,
        alpha,
        outcome,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::numeric("json", e.to_string()))?;
    Ok(format!("{json}\n"))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse_probability_list(text: &str) -> Result<ProbabilityVector> {
    let entries: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|f| f.trim().parse::<f64>()).collect();
    let entries = entries.map_err(|e| Error::invalid(format!("cannot parse probabilities: {e}")))?;
    ProbabilityVector::new(entries)
}

fn parse_p0(text: &str, d: usize) -> Result<ProbabilityVector> {
    if text.trim() == "uniform" {
        if d < 2 {
            return Err(Error::invalid("uniform null needs dimension at least 2"));
        }
        Ok(ProbabilityVector::uniform(d))
    } else {
        let p = parse_probability_list(text)?;
        if p.dim() != d {
            return Err(Error::invalid(format!(
                "null has {} entries but the table has {d} cells",
                p.dim()
            )));
        }
        Ok(p)
    }
}

fn build_params(
    mech: MechanismArg,
    eps: Option<f64>,
    delta: Option<f64>,
) -> Result<Option<PrivacyParams>> {
    match mech {
        MechanismArg::None => Ok(None),
        MechanismArg::Laplace => {
            let eps = eps.ok_or_else(|| Error::invalid("--mech laplace requires --eps"))?;
            Ok(Some(PrivacyParams::laplace(eps)?))
        }
        MechanismArg::Gauss => {
            let eps = eps.ok_or_else(|| Error::invalid("--mech gauss requires --eps"))?;
            let delta = delta.ok_or_else(|| Error::invalid("--mech gauss requires --delta"))?;
            Ok(Some(PrivacyParams::gaussian(eps, delta)?))
        }
    }
}

fn resolve_method(method: MethodArg, params: &Option<PrivacyParams>) -> Result<MethodArg> {
    let resolved = match (method, params) {
        (MethodArg::Auto, None) => MethodArg::Classical,
        (MethodArg::Auto, Some(p)) => match p.mechanism() {
            crate::privacy::Mechanism::Laplace => MethodArg::Mc,
            crate::privacy::Mechanism::Gaussian => MethodArg::Priv,
        },
        (m, _) => m,
    };
    if matches!(resolved, MethodArg::Mc | MethodArg::Priv) && params.is_none() {
        return Err(Error::invalid(
            "private tests need a mechanism: set --mech laplace or --mech gauss",
        ));
    }
    Ok(resolved)
}

fn run_gof(args: GofArgs) -> Result<String> {
    let table = CountTable::from_csv(&read_file(&args.table)?)?;
    let p0 = parse_p0(&args.p0, table.num_cells())?;
    let params = build_params(args.mech, args.eps, args.delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let n = table.n();
    match resolve_method(args.method, &params)? {
        MethodArg::Classical => match params {
            None => report("gof_classical", n, args.alpha, gof_classical(&table, args.alpha, &p0)?),
            Some(p) => {
                let noisy = add_noise(&table, &p, &mut rng)?;
                report(
                    "gof_classical_noisy",
                    n,
                    args.alpha,
                    gof_classical(&noisy, args.alpha, &p0)?,
                )
            }
        },
        MethodArg::Mc => {
            let p = params.expect("checked by resolve_method");
            report(
                "mc_gof",
                n,
                args.alpha,
                mc_gof(&table, &p, args.alpha, &p0, args.k, &mut rng)?,
            )
        }
        MethodArg::Priv => {
            let p = params.expect("checked by resolve_method");
            report(
                "priv_gof",
                n,
                args.alpha,
                priv_gof(&table, &p, args.alpha, &p0, &mut rng)?,
            )
        }
        MethodArg::Auto => unreachable!("resolved above"),
    }
}

fn run_indep(args: IndepArgs) -> Result<String> {
    let table = CountTable::from_csv(&read_file(&args.table)?)?;
    let params = build_params(args.mech, args.eps, args.delta)?;
    let projection = params
        .as_ref()
        .map(|p| -> Result<ProjectionConfig> {
            let cfg = ProjectionConfig::for_mechanism(p);
            match args.gamma {
                Some(g) => cfg.with_gamma(g),
                None => Ok(cfg),
            }
        })
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let n = table.n();
    match resolve_method(args.method, &params)? {
        MethodArg::Classical => match params {
            None => report("indep_classical", n, args.alpha, indep_classical(&table, args.alpha)?),
            Some(p) => {
                let noisy = add_noise(&table, &p, &mut rng)?;
                report(
                    "indep_classical_noisy",
                    n,
                    args.alpha,
                    indep_classical(&noisy, args.alpha)?,
                )
            }
        },
        MethodArg::Mc => {
            let p = params.expect("checked by resolve_method");
            let cfg = projection.expect("projection follows params");
            report(
                "mc_indep",
                n,
                args.alpha,
                mc_indep(&table, &p, args.alpha, args.k, &cfg, &mut rng)?,
            )
        }
        MethodArg::Priv => {
            let p = params.expect("checked by resolve_method");
            let cfg = projection.expect("projection follows params");
            report(
                "priv_indep",
                n,
                args.alpha,
                priv_indep(&table, &p, args.alpha, &cfg, &mut rng)?,
            )
        }
        MethodArg::Auto => unreachable!("resolved above"),
    }
}

fn run_critical_value(args: CriticalValueArgs) -> Result<String> {
    let params = PrivacyParams::gaussian(args.eps, args.delta)?;
    let tau = if args.indep {
        let pi1 = parse_probability_list(
            args.pi1
                .as_deref()
                .ok_or_else(|| Error::invalid("--indep requires --pi1"))?,
        )?;
        let pi2 = parse_probability_list(
            args.pi2
                .as_deref()
                .ok_or_else(|| Error::invalid("--indep requires --pi2"))?,
        )?;
        if args.dump_matrices.is_some() {
            return Err(Error::invalid(
                "--dump-matrices is only wired for the goodness-of-fit threshold",
            ));
        }
        indep_null_distribution(&pi1, &pi2, args.n, &params)?.critical_value(args.alpha)?
    } else {
        let p0 = match (&args.p0, args.uniform, args.d) {
            (Some(text), false, d) => parse_p0(text, d.unwrap_or_else(|| count_entries(text)))?,
            (None, true, Some(d)) => {
                if d < 2 {
                    return Err(Error::invalid("--d must be at least 2"));
                }
                ProbabilityVector::uniform(d)
            }
            (None, true, None) => return Err(Error::invalid("--uniform requires --d")),
            _ => {
                return Err(Error::invalid(
                    "specify the null with --uniform --d N or --p0 LIST",
                ))
            }
        };
        if let Some(path) = &args.dump_matrices {
            let diag = gof_null_diagnostics(&p0, args.n, &params)?;
            let json = serde_json::to_string_pretty(&diag)
                .map_err(|e| Error::numeric("json", e.to_string()))?;
            std::fs::write(path, json)
                .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
        }
        priv_gof_critical_value(&p0, args.n, &params, args.alpha)?
    };
    Ok(format!("{tau:.6}\n"))
}

fn count_entries(text: &str) -> usize {
    text.split(',').count()
}

fn run_simulation(args: SimulateArgs, significance: bool) -> Result<String> {
    let mut cfg = crate::harness::ExperimentConfig::from_json(&read_file(&args.config)?)?;
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = Some(workers);
    }
    if let Some(grid) = &args.n_grid {
        let parsed: std::result::Result<Vec<u64>, _> =
            grid.split(',').map(|v| v.trim().parse::<u64>()).collect();
        cfg.n_grid = parsed.map_err(|e| Error::invalid(format!("cannot parse --n-grid: {e}")))?;
    }
    if args.skip_failures {
        cfg.skip_failures = true;
    }
    let result = if significance {
        crate::harness::run_significance(&cfg)?
    } else {
        crate::harness::run_power(&cfg)?
    };
    Ok(result.to_csv(cfg.skip_failures))
}
