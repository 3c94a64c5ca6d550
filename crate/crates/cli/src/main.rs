//! `glaa`: fit, tune, simulate and compute the GLA tensor from CSV inputs.

mod commands;
mod error;
mod input;
mod output;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "glaa", version, about = "Generalized liquid association analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit at given thresholds and write loadings, active sets and scores.
    Fit(FitArgs),
    /// Select iteration thresholds by a train/test split.
    Tune(TuneArgs),
    /// Run replications of a simulation scenario for GLAA and ULA.
    Simulate(SimulateArgs),
    /// Write the moment tensor with Z decorrelated by its sample covariance.
    Gla(GlaArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV of X, one observation per row.
    #[arg(long)]
    x: PathBuf,
    /// CSV of Y, same number of rows as X.
    #[arg(long)]
    y: PathBuf,
    /// CSV of Z, same number of rows as X.
    #[arg(long)]
    z: PathBuf,
    /// Natural log of every input value before centering.
    #[arg(long)]
    log: bool,
    /// Scale every column to unit sample variance before centering.
    #[arg(long)]
    standardize: bool,
    /// Output file for the result document.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Ranks r1,r2,r3.
    #[arg(long, value_parser = parse_usize3)]
    ranks: [usize; 3],
    /// Initialization thresholds; default keeps the top `--init-keep` fraction of rows.
    #[arg(long, value_parser = parse_f64x3)]
    eta: Option<[f64; 3]>,
    /// Iteration thresholds on the squared row norms.
    #[arg(long, value_parser = parse_f64x3, default_value = "0,0,0")]
    eta_tilde: [f64; 3],
    #[arg(long, default_value_t = 0.5)]
    init_keep: f64,
    #[arg(long, default_value_t = glaa::GlaaConfig::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = glaa::GlaaConfig::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Transfer {
    Absolute,
    SampleSize,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Log-spaced candidates per mode in the default grid (0 is always added).
    #[arg(long, default_value_t = 8)]
    grid_size: usize,
    /// Quantile levels of the row criterion spanned by the default grid.
    #[arg(long, value_parser = parse_f64x2, default_value = "0.1,0.9")]
    grid_quantiles: (f64, f64),
    /// Explicit candidates, modes separated by ';', e.g. "0,0.1;0;0".
    #[arg(long, value_parser = parse_grid)]
    eta_tilde_grid: Option<[Vec<f64>; 3]>,
    /// Fraction of observations on the training side.
    #[arg(long, default_value_t = 0.5)]
    split_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    init_keep: f64,
    /// Number of random splits whose losses are averaged.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// How tuned thresholds carry over to the refit on all observations.
    #[arg(long, value_enum, default_value_t = Transfer::SampleSize)]
    transfer: Transfer,
}

impl GridArgs {
    fn grid(&self) -> glaa::tuning::TuningGrid {
        glaa::tuning::TuningGrid {
            eta_tilde_candidates: self.eta_tilde_grid.clone(),
            grid_size: self.grid_size,
            grid_quantiles: self.grid_quantiles,
            split_fraction: self.split_frac,
            seed: self.seed,
            init_keep_fraction: self.init_keep,
            repeats: self.repeats,
            transfer: match self.transfer {
                Transfer::Absolute => glaa::tuning::ThresholdTransfer::Absolute,
                Transfer::SampleSize => glaa::tuning::ThresholdTransfer::SampleSize,
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Ranks r1,r2,r3.
    #[arg(long, value_parser = parse_usize3)]
    ranks: [usize; 3],
    #[command(flatten)]
    grid: GridArgs,
    /// Also fit on all observations at the selected thresholds.
    #[arg(long)]
    refit: bool,
    #[arg(long, default_value_t = glaa::GlaaConfig::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = glaa::GlaaConfig::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Design {
    Sign,
    Sigmoid,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Preset scenario 1, 2 or 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: u8,
    /// Override the sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Override p1.
    #[arg(long)]
    p1: Option<usize>,
    /// Override p2.
    #[arg(long)]
    p2: Option<usize>,
    /// Override p3; also sets the number of active Z variables.
    #[arg(long)]
    p3: Option<usize>,
    #[arg(long, value_enum, default_value_t = Design::Sign)]
    f: Design,
    /// Association magnitudes, one per true rank.
    #[arg(long, value_parser = parse_f64_list)]
    rho: Option<FloatList>,
    /// Steepness of the sigmoid design.
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    grid_size: usize,
    /// Fraction of observations on the training side.
    #[arg(long, default_value_t = 0.5)]
    split_frac: f64,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy)]
enum Ridge {
    Value(f64),
    Auto,
}

#[derive(Debug, Args)]
struct GlaArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Added to the diagonal of the Z covariance: a nonnegative number, or `auto`
    /// to add a small ridge only when the covariance is singular.
    #[arg(long, value_parser = parse_ridge)]
    ridge: Option<Ridge>,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| format!("not a number: {v:?}")))
        .collect()
}

fn exactly<T, const N: usize>(v: Vec<T>) -> Result<[T; N], String> {
    let len = v.len();
    v.try_into()
        .map_err(|_| format!("expected {N} comma-separated values, got {len}"))
}

fn parse_usize3(s: &str) -> Result<[usize; 3], String> {
    exactly(parse_list(s)?)
}

fn parse_f64x3(s: &str) -> Result<[f64; 3], String> {
    exactly(parse_list(s)?)
}

fn parse_f64x2(s: &str) -> Result<(f64, f64), String> {
    let [a, b] = exactly(parse_list(s)?)?;
    Ok((a, b))
}

/// Comma-separated floats of any length.
#[derive(Debug, Clone)]
struct FloatList(Vec<f64>);

fn parse_f64_list(s: &str) -> Result<FloatList, String> {
    parse_list(s).map(FloatList)
}

fn parse_grid(s: &str) -> Result<[Vec<f64>; 3], String> {
    let modes = s
        .split(';')
        .map(parse_list::<f64>)
        .collect::<Result<Vec<_>, _>>()?;
    modes
        .try_into()
        .map_err(|_| "expected three ';'-separated candidate lists".to_string())
}

fn parse_ridge(s: &str) -> Result<Ridge, String> {
    if s == "auto" {
        return Ok(Ridge::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Ridge::Value(v)),
        _ => Err(format!("ridge must be a nonnegative number or 'auto', got {s:?}")),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Gla(a) => commands::gla(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsers() {
        assert_eq!(parse_usize3("2, 2,1"), Ok([2, 2, 1]));
        assert!(parse_usize3("2,2").is_err());
        assert_eq!(parse_f64x2("0.1,0.9"), Ok((0.1, 0.9)));
        assert_eq!(
            parse_grid("0,0.5;0;1e-3").unwrap(),
            [vec![0.0, 0.5], vec![0.0], vec![1e-3]]
        );
        assert!(parse_grid("0;0").is_err());
    }

    #[test]
    fn ridge_parser() {
        assert!(matches!(parse_ridge("auto"), Ok(Ridge::Auto)));
        assert!(matches!(parse_ridge("1e-6"), Ok(Ridge::Value(v)) if v == 1e-6));
        assert!(parse_ridge("-1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
