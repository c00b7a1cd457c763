//! Command-line driver for private conformal quantile experiments.
//!
//! Exit codes: 0 on success, 2 for configuration or domain errors, 3 for
//! I/O errors. The `PCOQS_SEED` environment variable overrides a config
//! file's `base_seed`; explicit flags override both.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use pcoqs::bounds::BoundInputs;
use pcoqs::harness::{
    bench_timing, emit, render_csv, render_json, run_experiment, sweep, EmitFormat,
    ExperimentConfig, ResultRow, SweepAxis,
};
use pcoqs::harness::fmt_sig;
use pcoqs::privacy::PrivacyBudget;
use pcoqs::quantile::{exponq_tune, Mechanism, SearchParams, TuneGrids};
use pcoqs::rng::stream;
use pcoqs::score::ScoreSet;
use pcoqs::{Error, Result};

const SEED_ENV: &str = "PCOQS_SEED";
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "pcoqs",
    version,
    about = "Differentially private conformal quantiles and benchmark sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a threshold from a file of calibration scores and print its
    /// trace.
    Quantile {
        /// Score file: one value per line (an optional `score` header is
        /// skipped).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// nonprivate, pcoqs or exponq.
        #[arg(long)]
        method: String,
        /// Privacy budget (zCDP for pcoqs; the equivalent pure-DP budget
        /// drives exponq).
        #[arg(long)]
        rho: f64,
        /// Binary-search interval tolerance.
        #[arg(long, default_value_t = 1e-10)]
        precision: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Score bounds as `lower,upper`.
        #[arg(long, default_value = "0,1")]
        bounds: String,
        /// Run the search loop with an inclusive upper bound (one extra
        /// noisy call at a correspondingly smaller per-call budget).
        #[arg(long)]
        inclusive_loop_bound: bool,
    },
    /// Run the experiment described by a config file and emit result rows.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. --set alpha=0.05 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output path; rows go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run one experiment per value of a swept parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// epsilon_cp, n, alpha or epsilon_f.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 0.1,0.5,1,10.
        #[arg(long)]
        values: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Time the quantile mechanism over serial replications.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Print the rank-error bound and the coverage band it implies.
    Bounds {
        /// Interval-to-precision ratio (upper - lower) / precision.
        #[arg(long)]
        u: f64,
        #[arg(long)]
        rho: f64,
        /// Failure probability of the rank-error bound.
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        ncal: usize,
        #[arg(long)]
        alpha: f64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let code = match err {
            Error::Io { .. } => 3,
            Error::Domain(_) | Error::Config(_) => 2,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Quantile {
            scores,
            alpha,
            method,
            rho,
            precision,
            seed,
            bounds,
            inclusive_loop_bound,
        } => quantile_command(
            &scores,
            alpha,
            &method,
            rho,
            precision,
            seed,
            &bounds,
            inclusive_loop_bound,
        ),
        Command::Simulate {
            config,
            set,
            out,
            format,
        } => {
            let format: EmitFormat = format.parse()?;
            let cfg = load_config(&config, &set)?;
            let rows = run_experiment(&cfg)?;
            write_rows(&rows, format, out.as_deref())
        }
        Command::Sweep {
            config,
            axis,
            values,
            set,
            out,
            format,
        } => {
            let format: EmitFormat = format.parse()?;
            let mut cfg = load_config(&config, &set)?;
            cfg.sweep_axis = None;
            cfg.sweep_values = None;
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(&values)?;
            let rows = sweep(&cfg, axis, &values)?;
            write_rows(&rows, format, out.as_deref())
        }
        Command::Bench {
            config,
            set,
            out,
            format,
        } => {
            let format: EmitFormat = format.parse()?;
            let cfg = load_config(&config, &set)?;
            let row = bench_timing(&cfg)?;
            write_rows(&[row], format, out.as_deref())
        }
        Command::Bounds {
            u,
            rho,
            beta,
            ncal,
            alpha,
        } => {
            let inputs = BoundInputs::new(u, rho, beta, ncal, alpha)?;
            let tau = inputs.rank_error();
            let (lo, hi) = inputs.coverage_band();
            println!("tau {}", fmt_sig(tau, 6));
            println!("coverage_lower {}", fmt_sig(lo, 6));
            println!("coverage_upper {}", fmt_sig(hi, 6));
            Ok(())
        }
    }
}

/// Config = file, overridden by `PCOQS_SEED`, overridden by --set flags.
fn load_config(path: &Path, set: &[String]) -> Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    if let Ok(seed) = std::env::var(SEED_ENV) {
        let parsed: u64 = seed
            .parse()
            .map_err(|_| Error::config(format!("{SEED_ENV} must be a u64, got {seed:?}")))?;
        overrides.push(("base_seed".to_string(), parsed.to_string()));
    }
    for pair in set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::config(format!("--set expects KEY=VALUE, got {pair:?}"))
        })?;
        overrides.push((key.to_string(), value.to_string()));
    }
    ExperimentConfig::load(path, &overrides)
}

fn parse_values(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid sweep value {v:?}")))
        })
        .collect()
}

fn write_rows(rows: &[ResultRow], format: EmitFormat, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => emit(rows, format, path),
        None => {
            let text = match format {
                EmitFormat::Csv => render_csv(rows),
                EmitFormat::Json => render_json(rows),
            };
            print!("{text}");
            Ok(())
        }
    }
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("score")) {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::domain(format!("line {}: invalid score {line:?}", i + 1)))?;
        values.push(v);
    }
    Ok(values)
}

fn parse_bounds(raw: &str) -> Result<(f64, f64)> {
    let (lo, hi) = raw
        .split_once(',')
        .ok_or_else(|| Error::domain(format!("--bounds expects lower,upper, got {raw:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::domain(format!("invalid bound {s:?}")))
    };
    Ok((parse(lo)?, parse(hi)?))
}

#[allow(clippy::too_many_arguments)]
fn quantile_command(
    scores_path: &Path,
    alpha: f64,
    method: &str,
    rho: f64,
    precision: f64,
    seed: Option<u64>,
    bounds: &str,
    inclusive_loop_bound: bool,
) -> Result<()> {
    let method: Mechanism = method.parse()?;
    let (lower, upper) = parse_bounds(bounds)?;
    let scores = ScoreSet::new(read_scores(scores_path)?, lower, upper)?;
    let seed = seed
        .or_else(|| {
            std::env::var(SEED_ENV)
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(DEFAULT_SEED);
    let mut rng = stream(seed, 0);

    let budget = PrivacyBudget::from_rho(rho, 1e-5)?;
    let mut tuned = None;
    let result = match method {
        Mechanism::Nonprivate => pcoqs::quantile::nonprivate_quantile(&scores, alpha)?,
        Mechanism::Pcoqs => {
            let params = SearchParams {
                precision,
                inclusive_loop_bound,
            };
            pcoqs::quantile::pcoqs_quantile_with(
                &scores,
                alpha,
                &params,
                Some(budget.rho()),
                &mut rng,
            )?
        }
        Mechanism::Exponq => {
            let grids = TuneGrids::default();
            let t = exponq_tune(&scores, alpha, budget.epsilon(), &grids, &mut rng)?;
            tuned = Some(t);
            pcoqs::quantile::exponq_quantile(
                &scores,
                alpha,
                budget.epsilon(),
                t.n_bins,
                t.inflation,
                &mut rng,
            )?
        }
    };

    println!("threshold {}", fmt_sig(result.threshold, 6));
    println!("method {}", result.mechanism);
    println!("target_rank {}", result.target_rank);
    println!("iterations_used {}", result.iterations_used);
    println!("noise_sd {}", fmt_sig(result.noise_sd, 6));
    println!("n_cal {}", scores.len());
    println!("seed {seed}");
    if let Some(t) = tuned {
        println!("exponq_n_bins {}", t.n_bins);
        println!("exponq_inflation {}", fmt_sig(t.inflation, 6));
        println!("exponq_tune_fallback {}", t.infeasible_fallback);
    }
    Ok(())
}
