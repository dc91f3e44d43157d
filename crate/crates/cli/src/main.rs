//! `mvu`: optimize a portfolio under parameter uncertainty, run the
//! three-account simulation, and tabulate factor curves.
//!
//! Exit codes: 0 on success, 1 on other failures, 2 for configuration or
//! argument errors, 3 when the objective has no unique maximum.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mvu_core::config::{parse_document, run_optimize, ConfigError, OptimizeReport, RunError};
use mvu_core::curves::{self, format_significant, CurveError, DEFAULT_ALPHA_RANGE, DEFAULT_CORR_N};
use mvu_core::factors::CorrBranch;
use mvu_core::optimizer::OptimizeError;
use mvu_core::simulator::{
    run_experiment, run_robustness, ExperimentReport, SimulationError, TrialOutcome, TrialStatus,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "mvu",
    version,
    about = "Mean-variance allocation under parameter uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adjusted and naive weights for a run document.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Naive vs adjusted vs true-parameter accounts.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run this many trials with perturbed factors.
        #[arg(long)]
        trials: Option<u32>,
        /// Log-scale noise on A and B; implies robustness trials.
        #[arg(long)]
        factor_noise: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
        /// Write per-step log returns of a single run as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-column CSV of a factor curve.
    Curves {
        #[arg(long, value_enum)]
        kind: CurveKind,
        /// Lower bound: sigma for a-factor, alpha for corr-ratio.
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Correlation density exponent (odd).
        #[arg(long, default_value_t = DEFAULT_CORR_N)]
        n: u32,
        #[arg(long, value_enum, default_value_t = Branch::Plus)]
        sign: Branch,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveKind {
    AFactor,
    CorrRatio,
}

#[derive(Clone, Copy, ValueEnum)]
enum Branch {
    Plus,
    Minus,
}

/// Errors that map to a specific exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    NoMaximum(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<OptimizeError> for Failure {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::NotPositiveDefinite | OptimizeError::Singular { .. } => {
                Failure::NoMaximum(e.to_string())
            }
            other => Failure::Other(other.into()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Optimize(o) => o.into(),
        }
    }
}

impl From<SimulationError> for Failure {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Allocation {
                source: OptimizeError::NotPositiveDefinite | OptimizeError::Singular { .. },
                ..
            } => Failure::NoMaximum(e.to_string()),
            SimulationError::InvalidConfig(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<CurveError> for Failure {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::InvalidRange(_) => Failure::Config(e.to_string()),
            CurveError::Factor(_) => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize {
            config,
            format,
            out,
        } => cmd_optimize(&config, format, out.as_deref()),
        Command::Experiment {
            config,
            steps,
            seed,
            trials,
            factor_noise,
            format,
            out,
        } => cmd_experiment(
            &config,
            steps,
            seed,
            trials,
            factor_noise,
            format,
            out.as_deref(),
        ),
        Command::Curves {
            kind,
            min,
            max,
            points,
            n,
            sign,
            out,
        } => cmd_curves(kind, min, max, points, n, sign, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NoMaximum(msg)) => {
            eprintln!("no optimum: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_document(path: &Path) -> Result<mvu_core::config::RunConfigDocument, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(parse_document(&text)?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

fn cmd_optimize(config: &Path, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    let doc = read_document(config)?;
    let report = run_optimize(&doc)?;
    let text = match format {
        Format::Json => to_json(&report)?,
        Format::Human => render_optimize(&report),
    };
    emit(&text, out)
}

fn render_optimize(r: &OptimizeReport) -> String {
    let mut s = String::new();
    let width = r.assets.iter().map(|a| a.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(s, "x = {}, r = {}", r.x, r.riskless);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<width$}  {:>8}  {:>10}  {:>10}  {:>10}  {:>10}",
        "asset", "A", "f", "c", "f_naive", "c_naive"
    );
    for (i, name) in r.assets.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.2}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
            name,
            r.factors.a[i],
            r.allocation.fractions[i],
            r.allocation.c_units[i],
            r.markowitz.fractions[i],
            r.markowitz.c_units[i]
        );
    }
    let _ = writeln!(
        s,
        "{:<width$}  {:>8}  {:>10.4}  {:>10}  {:>10.4}",
        "cash", "", r.allocation.riskless_fraction, "", r.markowitz.riskless_fraction
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "B =");
    for row in r.factors.b.to_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
        let _ = writeln!(s, "  [{}]", cells.join("  "));
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "<Q>  = {:.6}   (naive Q = {:.6})",
        r.allocation.q_value, r.markowitz.q_value
    );
    let _ = writeln!(
        s,
        "<dU> = {:.6}   (naive {:.6})",
        r.allocation.du_coefficient, r.markowitz.du_coefficient
    );
    s
}

#[derive(Serialize)]
struct RobustnessDocument<'a> {
    trials: &'a [TrialOutcome],
    better_wins: usize,
    completed: usize,
}

fn cmd_experiment(
    config: &Path,
    steps: Option<u64>,
    seed: Option<u64>,
    trials: Option<u32>,
    factor_noise: Option<f64>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let doc = read_document(config)?;
    let mut cfg = doc.experiment_config()?;
    if let Some(steps) = steps {
        cfg.steps = steps;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if trials.is_some() || factor_noise.is_some() {
        if out.is_some() {
            return Err(Failure::Config(
                "--out writes a single run's series; drop --trials".into(),
            ));
        }
        let noise = factor_noise.or(cfg.factor_noise).unwrap_or(0.0);
        let outcomes = run_robustness(&cfg, trials.unwrap_or(20), noise)?;
        let text = match format {
            Format::Json => {
                let completed = outcomes.iter().filter(|t| t.report().is_some()).count();
                let better_wins = outcomes
                    .iter()
                    .filter_map(|t| t.report())
                    .filter(|r| r.sharpe_better > r.sharpe_naive)
                    .count();
                to_json(&RobustnessDocument {
                    trials: &outcomes,
                    better_wins,
                    completed,
                })?
            }
            Format::Human => render_trials(&outcomes, noise),
        };
        return emit(&text, None);
    }
    let report = run_experiment(&cfg)?;
    if let Some(path) = out {
        fs::write(path, series_csv(&report))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let text = match format {
        Format::Json => to_json(&report)?,
        Format::Human => render_report(&report),
    };
    emit(&text, None)
}

fn series_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("step,naive,better,true\n");
    let series = &r.series;
    for t in 0..series.truth.log_returns.len() {
        let _ = writeln!(
            s,
            "{t},{},{},{}",
            format_significant(series.naive.log_returns[t]),
            format_significant(series.better.log_returns[t]),
            format_significant(series.truth.log_returns[t])
        );
    }
    s
}

fn render_report(r: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed {}  steps {}  dt {}  x {}",
        r.seed, r.steps, r.dt, r.x
    );
    let a: Vec<String> = r.factors.a.iter().map(|v| format!("{v:.2}")).collect();
    let _ = writeln!(s, "A = [{}]", a.join(" "));
    let b: Vec<String> = r
        .factors
        .b
        .to_rows()
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| format!("{v:.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let _ = writeln!(s, "B = [{}]", b.join("; "));
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<8}  {:>8}  {:>12}  {:>12}  {:>14}",
        "account", "sharpe", "mean", "stdev", "log wealth"
    );
    for (name, acc) in [
        ("naive", &r.accounts.naive),
        ("better", &r.accounts.better),
        ("true", &r.accounts.truth),
    ] {
        let _ = writeln!(
            s,
            "{:<8}  {:>8.4}  {:>12.6}  {:>12.6}  {:>14.4}",
            name, acc.sharpe, acc.mean_return, acc.stdev_return, acc.final_log_wealth
        );
    }
    s
}

fn render_trials(trials: &[TrialOutcome], noise: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "factor noise {noise}");
    let _ = writeln!(
        s,
        "{:>5}  {:>20}  {:>8}  {:>8}  {:>8}  {:>6}",
        "trial", "seed", "naive", "better", "true", ""
    );
    let mut wins = 0;
    let mut done = 0;
    for t in trials {
        match &t.status {
            TrialStatus::Completed { report } => {
                done += 1;
                let win = report.sharpe_better > report.sharpe_naive;
                wins += win as usize;
                let _ = writeln!(
                    s,
                    "{:>5}  {:>20}  {:>8.4}  {:>8.4}  {:>8.4}  {:>6}",
                    t.trial,
                    t.seed,
                    report.sharpe_naive,
                    report.sharpe_better,
                    report.sharpe_true,
                    if win { "better" } else { "naive" }
                );
            }
            TrialStatus::NotPositiveDefinite { step, account } => {
                let _ = writeln!(
                    s,
                    "{:>5}  {:>20}  not positive definite ({account}, step {step})",
                    t.trial, t.seed
                );
            }
            TrialStatus::Failed { message } => {
                let _ = writeln!(s, "{:>5}  {:>20}  failed: {message}", t.trial, t.seed);
            }
        }
    }
    let _ = writeln!(
        s,
        "better > naive in {wins}/{done} completed trials ({} total)",
        trials.len()
    );
    s
}

fn cmd_curves(
    kind: CurveKind,
    min: Option<f64>,
    max: Option<f64>,
    points: usize,
    n: u32,
    sign: Branch,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let text = match kind {
        CurveKind::AFactor => curves::a_factor_csv(&curves::a_factor_curve(
            min.unwrap_or(0.05),
            max.unwrap_or(5.0),
            points,
        )?),
        CurveKind::CorrRatio => {
            let branch = match sign {
                Branch::Plus => CorrBranch::Plus,
                Branch::Minus => CorrBranch::Minus,
            };
            curves::corr_ratio_csv(&curves::corr_ratio_curve(
                min.unwrap_or(DEFAULT_ALPHA_RANGE.0),
                max.unwrap_or(DEFAULT_ALPHA_RANGE.1),
                points,
                n,
                branch,
            )?)
        }
    };
    emit(&text, out)
}
