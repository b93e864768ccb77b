//! Command-line front end for the hierarchical factor regression crate.
//!
//! Four subcommands cover the full workflow: `simulate` writes a synthetic
//! panel to CSV with a truth sidecar, `mc-study` scores the estimator over a
//! grid of panel sizes, `fit` estimates slopes and factor counts from a CSV
//! panel, and `bootstrap-ci` adds moving-block bootstrap intervals for the
//! slopes. Every run is reproducible from the report alone: reports echo the
//! artifact version, the resolved settings, and the seed, and never contain
//! wall-clock output (timing goes to stderr).
//!
//! Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 I/O failure.

mod dataio;
mod exit;
mod report;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hierfactor::bootstrap::{bootstrap_ci, BootstrapResult};
use hierfactor::dgp::{generate, DgpSpec};
use hierfactor::heterogeneous::fit_heterogeneous;
use hierfactor::homogeneous::fit_full;
use hierfactor::montecarlo::run_grid;
use hierfactor::panel::PanelDataset;
use hierfactor::select::{variance_shares, SelectionResult};

use crate::exit::{CliError, Result};
use crate::report::{number, Format, Report};
use crate::settings::{model_config, parse_mode, AxisValues, FileConfig, Mode};

#[derive(Parser)]
#[command(name = "hierfactor", version, about = "Hierarchical factor panel regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic three-dimensional panel and write it as long CSV.
    Simulate(SimulateArgs),
    /// Replicate estimation over a grid of panel sizes and tabulate scores.
    McStudy(McStudyArgs),
    /// Estimate slopes, factor counts, and variance shares from a CSV panel.
    Fit(FitArgs),
    /// Moving-block bootstrap confidence intervals for the slopes.
    BootstrapCi(BootstrapArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of industries.
    #[arg(long = "L")]
    industries: Option<usize>,
    /// Number of periods.
    #[arg(long = "T")]
    periods: Option<usize>,
    /// Seed for the draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Noise standard deviation multiplier (0 disables noise).
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Output CSV path; the generating truth lands next to it as
    /// `<stem>.truth.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file supplying defaults for any flag not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct McStudyArgs {
    /// Industry counts, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    industries: Option<Vec<usize>>,
    /// Period counts, comma separated.
    #[arg(long = "T", value_delimiter = ',')]
    periods: Option<Vec<usize>>,
    /// Replications per grid cell.
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed for the replication streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Factor-count cap scanned by the selector.
    #[arg(long)]
    dmax: Option<usize>,
    /// Eigenvalue threshold override (default: 1 / log of the larger
    /// of unit count and period count, computed per dataset).
    #[arg(long)]
    omega: Option<f64>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file supplying defaults for any flag not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Input panel in long CSV format.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Slope model: one pooled slope or one slope per industry.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Seed echoed into the report (estimation itself is deterministic).
    #[arg(long)]
    seed: Option<u64>,
    /// Factor-count cap scanned by the selector.
    #[arg(long)]
    dmax: Option<usize>,
    /// Eigenvalue threshold override.
    #[arg(long)]
    omega: Option<f64>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file supplying defaults for any flag not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Input panel in long CSV format.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Slope model: one pooled slope or one slope per industry.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Number of bootstrap replicates.
    #[arg(long)]
    bootstrap_reps: Option<usize>,
    /// Interval level alpha; bounds sit at the alpha/2 and 1 - alpha/2
    /// empirical quantiles.
    #[arg(long)]
    level: Option<f64>,
    /// Block length for the moving-block resampler (default: cube root
    /// of the period count, rounded down).
    #[arg(long)]
    block_length: Option<usize>,
    /// Seed for the resampling streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Factor-count cap scanned by the selector.
    #[arg(long)]
    dmax: Option<usize>,
    /// Eigenvalue threshold override.
    #[arg(long)]
    omega: Option<f64>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file supplying defaults for any flag not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let (name, outcome) = match cli.command {
        Command::Simulate(args) => ("simulate", run_simulate(args)),
        Command::McStudy(args) => ("mc-study", run_mc_study(args)),
        Command::Fit(args) => ("fit", run_fit(args)),
        Command::BootstrapCi(args) => ("bootstrap-ci", run_bootstrap(args)),
    };
    match outcome {
        Ok(()) => {
            eprintln!("{name} finished in {:.1}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

/// One value required: the flag if given, else the config file, else an
/// error naming the flag.
fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| CliError::Validation(format!("missing required setting --{name}")))
}

/// Config-file axis entries double as scalars for `simulate`.
fn single_axis(values: Option<&AxisValues>, name: &str) -> Result<Option<usize>> {
    match values {
        None => Ok(None),
        Some(v) => match v.to_vec().as_slice() {
            [one] => Ok(Some(*one)),
            other => Err(CliError::Validation(format!(
                "{name} must be a single value here, got {} values",
                other.len()
            ))),
        },
    }
}

fn resolve_mode(flag: Option<Mode>, file: &FileConfig) -> Result<Mode> {
    match flag {
        Some(mode) => Ok(mode),
        None => match file.mode.as_deref() {
            Some(name) => parse_mode(name),
            None => Ok(Mode::Homogeneous),
        },
    }
}

fn resolve_format(flag: Option<Format>, file: &FileConfig) -> Result<Format> {
    Ok(flag.or(file.format()?).unwrap_or(Format::MarkdownTable))
}

fn industry_names(data: &PanelDataset) -> Vec<String> {
    match data.labels() {
        Some(labels) => labels.industries.clone(),
        None => (0..data.industries()).map(|i| format!("industry{i:02}")).collect(),
    }
}

fn variable_names(data: &PanelDataset) -> Vec<String> {
    match data.labels() {
        Some(labels) => labels.variables.clone(),
        None => (1..=data.regressor_count()).map(|k| format!("x{k}")).collect(),
    }
}

fn factor_count_rows(selection: &SelectionResult, industries: &[String]) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["global".into(), selection.global_count.to_string()]];
    for (name, count) in industries.iter().zip(&selection.specific_counts) {
        rows.push(vec![name.clone(), count.to_string()]);
    }
    rows
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let industries = require(
        args.industries,
        single_axis(file.l.as_ref(), "L")?,
        "L",
    )?;
    let periods = require(args.periods, single_axis(file.t.as_ref(), "T")?, "T")?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out = require(args.out, file.out, "out")?;

    let mut spec = DgpSpec::study_defaults(industries, periods, seed);
    if let Some(noise_scale) = args.noise_scale.or(file.noise_scale) {
        spec = spec.with_noise_scale(noise_scale);
    }
    let (data, truth) = generate(&spec)?;
    dataio::write_dataset(&data, &out)?;
    let sidecar = out.with_extension("truth.json");
    dataio::write_truth(&truth, &sidecar)?;
    eprintln!(
        "wrote {} units x {} periods to {} (truth in {})",
        data.total_units(),
        data.periods(),
        out.display(),
        sidecar.display()
    );
    Ok(())
}

fn run_mc_study(args: McStudyArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let industries = require(
        args.industries,
        file.l.as_ref().map(AxisValues::to_vec),
        "L",
    )?;
    let periods = require(args.periods, file.t.as_ref().map(AxisValues::to_vec), "T")?;
    let reps = args.reps.or(file.reps).unwrap_or(1000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let dmax = args.dmax.or(file.dmax);
    let omega = args.omega.or(file.omega);
    let format = resolve_format(args.format, &file)?;

    let config = model_config(seed, dmax, omega);
    let grid = run_grid(&industries, &periods, reps, &config, seed)?;

    let axis = |values: &[usize]| {
        values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    };
    let mut report = Report::new(
        "mc-study",
        seed,
        vec![
            ("L".into(), axis(&industries)),
            ("T".into(), axis(&periods)),
            ("reps".into(), reps.to_string()),
            ("dmax".into(), config.max_factors.to_string()),
            (
                "omega".into(),
                config
                    .threshold_override
                    .map_or_else(|| "auto".into(), number),
            ),
        ],
    );
    let rows = grid
        .cells
        .iter()
        .map(|cell| {
            vec![
                cell.industries.to_string(),
                cell.periods.to_string(),
                cell.replications.to_string(),
                cell.completed.to_string(),
                cell.failures.len().to_string(),
                number(cell.acc_global),
                number(cell.acc_specific),
                number(cell.acc_specific_mean),
                number(cell.rmse_beta),
                number(cell.rmse_global_factors),
                number(cell.rmse_specific_factors),
                number(cell.max_objective_increase),
            ]
        })
        .collect();
    report.push_table(
        "cells",
        &[
            "L",
            "T",
            "requested",
            "completed",
            "failures",
            "acc_global",
            "acc_specific",
            "acc_specific_mean",
            "rmse_beta",
            "rmse_global_factors",
            "rmse_specific_factors",
            "max_objective_increase",
        ],
        rows,
    );
    report.emit(format, args.out.or(file.out).as_deref())
}

fn run_fit(args: FitArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let csv = require(args.csv, file.csv.clone(), "csv")?;
    let mode = resolve_mode(args.mode, &file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let dmax = args.dmax.or(file.dmax);
    let omega = args.omega.or(file.omega);
    let format = resolve_format(args.format, &file)?;

    let data = dataio::load_dataset(&csv)?;
    let config = model_config(seed, dmax, omega);
    let industries = industry_names(&data);
    let variables = variable_names(&data);

    let settings = |threshold: f64, converged: bool| {
        vec![
            ("csv".into(), csv.display().to_string()),
            ("mode".into(), format!("{mode:?}").to_lowercase()),
            ("dmax".into(), config.max_factors.to_string()),
            ("omega".into(), number(threshold)),
            ("converged".into(), converged.to_string()),
        ]
    };

    let mut report;
    match mode {
        Mode::Homogeneous => {
            let fit = fit_full(&data, &config)?;
            if !fit.converged {
                eprintln!("warning: alternation stopped at the iteration cap");
            }
            report = Report::new("fit", seed, settings(fit.selection.threshold, fit.converged));
            let slope_rows = variables
                .iter()
                .zip(fit.beta.iter())
                .map(|(name, value)| vec![name.clone(), number(*value)])
                .collect();
            report.push_table("slopes", &["variable", "estimate"], slope_rows);
            report.push_table(
                "factor counts",
                &["component", "count"],
                factor_count_rows(&fit.selection, &industries),
            );
            let shares = variance_shares(
                &data,
                std::slice::from_ref(&fit.beta),
                &fit.factors.global,
                &fit.factors.specific,
            )?;
            report.push_table(
                "variance shares",
                &["component", "share"],
                share_rows(&shares, &industries),
            );
        }
        Mode::Heterogeneous => {
            let fit = fit_heterogeneous(&data, &config)?;
            if !fit.converged {
                eprintln!("warning: alternation stopped at the iteration cap");
            }
            report = Report::new("fit", seed, settings(fit.selection.threshold, fit.converged));
            let mut slope_rows = Vec::new();
            for (name, beta) in industries.iter().zip(&fit.betas) {
                for (variable, value) in variables.iter().zip(beta.iter()) {
                    slope_rows.push(vec![name.clone(), variable.clone(), number(*value)]);
                }
            }
            report.push_table("slopes", &["industry", "variable", "estimate"], slope_rows);
            report.push_table(
                "factor counts",
                &["component", "count"],
                factor_count_rows(&fit.selection, &industries),
            );
            let shares = variance_shares(
                &data,
                &fit.betas,
                &fit.factors.global,
                &fit.factors.specific,
            )?;
            report.push_table(
                "variance shares",
                &["component", "share"],
                share_rows(&shares, &industries),
            );
        }
    }
    report.emit(format, args.out.or(file.out).as_deref())
}

fn share_rows(
    shares: &hierfactor::select::VarianceShares,
    industries: &[String],
) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["global".into(), number(shares.global)]];
    for (name, share) in industries.iter().zip(&shares.specific) {
        rows.push(vec![name.clone(), number(*share)]);
    }
    rows.push(vec!["remainder".into(), number(shares.remainder)]);
    rows
}

fn run_bootstrap(args: BootstrapArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let csv = require(args.csv, file.csv.clone(), "csv")?;
    let mode = resolve_mode(args.mode, &file)?;
    let replications = args.bootstrap_reps.or(file.bootstrap_reps).unwrap_or(399);
    let level = args.level.or(file.level).unwrap_or(0.05);
    let block_length = args.block_length.or(file.block_length);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let dmax = args.dmax.or(file.dmax);
    let omega = args.omega.or(file.omega);
    let format = resolve_format(args.format, &file)?;

    let data = dataio::load_dataset(&csv)?;
    let config = model_config(seed, dmax, omega);
    let industries = industry_names(&data);
    let variables = variable_names(&data);

    // The full fit selects the factor counts that every replicate holds
    // fixed, and its slopes are the point estimates the intervals frame.
    let (selection, point, lib_mode) = match mode {
        Mode::Homogeneous => {
            let fit = fit_full(&data, &config)?;
            (fit.selection, vec![fit.beta], hierfactor::bootstrap::FitMode::Homogeneous)
        }
        Mode::Heterogeneous => {
            let fit = fit_heterogeneous(&data, &config)?;
            (fit.selection, fit.betas, hierfactor::bootstrap::FitMode::Heterogeneous)
        }
    };
    let result = bootstrap_ci(
        &data,
        selection.global_count,
        &selection.specific_counts,
        lib_mode,
        &config,
        replications,
        level,
        block_length,
    )?;

    let mut report = Report::new(
        "bootstrap-ci",
        seed,
        vec![
            ("csv".into(), csv.display().to_string()),
            ("mode".into(), format!("{mode:?}").to_lowercase()),
            ("bootstrap_reps".into(), result.replications.to_string()),
            ("completed".into(), result.completed.to_string()),
            ("failures".into(), result.failures.len().to_string()),
            ("level".into(), number(result.level)),
            ("block_length".into(), result.block_length.to_string()),
            ("dmax".into(), config.max_factors.to_string()),
            ("omega".into(), number(selection.threshold)),
        ],
    );
    report.push_table(
        "confidence intervals",
        &interval_columns(mode),
        interval_rows(mode, &industries, &variables, &point, &result),
    );
    report.push_table(
        "factor counts",
        &["component", "count"],
        factor_count_rows(&selection, &industries),
    );
    report.emit(format, args.out.or(file.out).as_deref())
}

fn interval_columns(mode: Mode) -> Vec<&'static str> {
    match mode {
        Mode::Homogeneous => vec!["variable", "estimate", "lower", "upper"],
        Mode::Heterogeneous => vec!["industry", "variable", "estimate", "lower", "upper"],
    }
}

fn interval_rows(
    mode: Mode,
    industries: &[String],
    variables: &[String],
    point: &[nalgebra::DVector<f64>],
    result: &BootstrapResult,
) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (block, estimate) in point.iter().enumerate() {
        for (k, variable) in variables.iter().enumerate() {
            let mut row = Vec::new();
            if mode == Mode::Heterogeneous {
                row.push(industries[block].clone());
            }
            row.push(variable.clone());
            row.push(number(estimate[k]));
            row.push(number(result.lower[block][k]));
            row.push(number(result.upper[block][k]));
            rows.push(row);
        }
    }
    rows
}
