//! Command-line interface: `fit` for CSV data, `simulate` for the
//! Monte-Carlo benchmark grid.
//!
//! Exit codes: 0 on success, 2 for usage or input problems (missing files
//! or columns, unparsable flags, data that fails validation), 3 when the
//! numerics give up (singular systems, degenerate or failed smoothing
//! selection).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::fitter::{fit, FitConfig, FitError, LambdaRule, ScaleMethod};
use crate::loss::{LossFamily, LossSpec};
use crate::simulate::{
    report_table, run_monte_carlo, ErrorLaw, Estimator, SimConfig, TableFormat, TestFunction,
};

/// Robust penalized spline regression.
#[derive(Debug, Parser)]
#[command(name = "robust-pspline", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a penalized spline to two columns of a CSV file.
    Fit(FitArgs),
    /// Benchmark the robust and least-squares estimators on synthetic data.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV file (header row required).
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding the covariate.
    #[arg(long)]
    pub x: String,
    /// Column holding the response.
    #[arg(long)]
    pub y: String,
    /// Loss family: huber, quadratic, tukey, or smoothed-huber.
    #[arg(long, default_value = "huber")]
    pub loss: String,
    /// Loss tuning constant; defaults to the family's standard value.
    #[arg(long)]
    pub c: Option<f64>,
    /// Spline order (degree + 1).
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    /// Penalized derivative order.
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    /// Cap on the number of interior knots.
    #[arg(long = "kmax", default_value_t = 40)]
    pub kmax: usize,
    /// Preliminary scale: iqr, mad, diff, or gasser.
    #[arg(long, default_value = "iqr")]
    pub scale: String,
    /// Smoothing parameter: "auto" for GCV selection, or a number.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Where to write the fit as JSON; plot data lands next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated test functions (f1, f2, f3).
    #[arg(long, value_delimiter = ',', default_value = "f1,f2,f3")]
    pub functions: Vec<String>,
    /// Comma-separated error laws (gaussian, t3, mixture, slash).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "gaussian,t3,mixture,slash"
    )]
    pub laws: Vec<String>,
    /// Comma-separated estimators (huber_pspline, ls_pspline).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "huber_pspline,ls_pspline"
    )]
    pub estimators: Vec<String>,
    /// Observations per replication.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Replications per cell.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// RNG seed; echoed so runs can be reproduced.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (0 = runtime default); falls back to the
    /// ROBUST_PSPLINE_WORKERS environment variable.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Table format for standard output: tsv, markdown, or json.
    #[arg(long, default_value = "tsv")]
    pub format: String,
    /// Optional path for the full JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// CLI-level failure, carrying the exit code class.
#[derive(Debug)]
enum CliError {
    /// Bad usage or input: exit 2.
    Input(String),
    /// The fit itself failed numerically: exit 3.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<FitError> for CliError {
    fn from(err: FitError) -> Self {
        match err {
            FitError::SingularFit(_)
            | FitError::DegenerateGcv { .. }
            | FitError::SelectionFailed => CliError::Numerical(err.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Fit(args) => run_fit(&args),
        Command::Simulate(args) => run_simulate(&args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.code()
        }
    }
}

fn parse_loss(name: &str, c: Option<f64>) -> Result<LossSpec, CliError> {
    let family = match name {
        "huber" => LossFamily::Huber,
        "quadratic" => LossFamily::Quadratic,
        "tukey" => LossFamily::Tukey,
        "smoothed-huber" => LossFamily::SmoothedHuber,
        _ => {
            return Err(CliError::Input(format!(
                "unknown loss `{name}` (expected huber, quadratic, tukey, or smoothed-huber)"
            )))
        }
    };
    let c = c.unwrap_or_else(|| LossSpec::default_c(family));
    if !(c > 0.0 && c.is_finite()) {
        return Err(CliError::Input(format!(
            "loss tuning constant must be positive and finite, got {c}"
        )));
    }
    Ok(LossSpec { family, c })
}

fn parse_scale(name: &str) -> Result<ScaleMethod, CliError> {
    match name {
        "iqr" => Ok(ScaleMethod::Iqr),
        "mad" => Ok(ScaleMethod::Mad),
        "diff" => Ok(ScaleMethod::DiffMedian),
        "gasser" => Ok(ScaleMethod::Gasser),
        _ => Err(CliError::Input(format!(
            "unknown scale method `{name}` (expected iqr, mad, diff, or gasser)"
        ))),
    }
}

fn parse_lambda(text: &str) -> Result<LambdaRule, CliError> {
    if text == "auto" {
        return Ok(LambdaRule::Auto);
    }
    match text.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaRule::Fixed(v)),
        _ => Err(CliError::Input(format!(
            "lambda must be \"auto\" or a nonnegative number, got `{text}`"
        ))),
    }
}

/// Weight-bucket label for diagnostic plots: cut points at 0.33 and 0.66.
fn weight_bucket(w: f64) -> &'static str {
    if w <= 0.33 {
        "low"
    } else if w <= 0.66 {
        "mid"
    } else {
        "high"
    }
}

/// Reads the x/y columns, skipping rows that fail to parse or carry
/// non-finite values. Returns the data and the skipped-row count.
fn read_columns(
    path: &Path,
    x_col: &str,
    y_col: &str,
) -> Result<(Vec<f64>, Vec<f64>, usize), CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("cannot read CSV header: {e}")))?
        .clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Input(format!(
                "column `{name}` not found (header has: {})",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let xi = find(x_col)?;
    let yi = find(y_col)?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut skipped = 0usize;
    for record in reader.records() {
        let Ok(record) = record else {
            skipped += 1;
            continue;
        };
        let parse = |idx: usize| {
            record
                .get(idx)
                .and_then(|cell| cell.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        match (parse(xi), parse(yi)) {
            (Some(x), Some(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ => skipped += 1,
        }
    }
    Ok((xs, ys, skipped))
}

fn write_plot_csv(path: &Path, result: &crate::fitter::FitResult) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(["x", "y", "fitted", "residual", "weight", "weight_bucket"])
        .map_err(|e| CliError::Input(format!("cannot write plot data: {e}")))?;
    for i in 0..result.xs.len() {
        let residual = result.ys[i] - result.fitted[i];
        writer
            .write_record([
                result.xs[i].to_string(),
                result.ys[i].to_string(),
                result.fitted[i].to_string(),
                residual.to_string(),
                result.weights[i].to_string(),
                weight_bucket(result.weights[i]).to_string(),
            ])
            .map_err(|e| CliError::Input(format!("cannot write plot data: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Input(format!("cannot write plot data: {e}")))?;
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    let (xs, ys, skipped) = read_columns(&args.input, &args.x, &args.y)?;
    if skipped == 1 {
        eprintln!("warning: 1 row skipped");
    } else if skipped > 1 {
        eprintln!("warning: {skipped} rows skipped");
    }

    let config = FitConfig {
        loss: parse_loss(&args.loss, args.c)?,
        p: args.p,
        q: args.q,
        k_max: args.kmax,
        scale_method: parse_scale(&args.scale)?,
        lambda: parse_lambda(&args.lambda)?,
        ..FitConfig::default()
    };
    let result = fit(&xs, &ys, &config)?;

    let json = serde_json::to_string_pretty(&result).expect("fit result serialization cannot fail");
    std::fs::write(&args.out, json + "\n")
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", args.out.display())))?;
    write_plot_csv(&args.out.with_extension("plot.csv"), &result)?;

    println!("sigma_hat: {}", result.sigma_hat);
    println!("lambda_hat: {}", result.lambda_hat);
    println!("edf: {}", result.edf);
    println!("iterations: {}", result.iterations);
    Ok(())
}

/// Worker-count precedence: the flag, then the environment variable, then 0
/// (runtime default).
fn resolve_workers(flag: Option<usize>, env: Option<&str>) -> Result<usize, CliError> {
    if let Some(w) = flag {
        return Ok(w);
    }
    match env {
        None => Ok(0),
        Some(text) => text.trim().parse::<usize>().map_err(|_| {
            CliError::Input(format!(
                "ROBUST_PSPLINE_WORKERS must be a nonnegative integer, got `{text}`"
            ))
        }),
    }
}

fn parse_list<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    items
        .iter()
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| CliError::Input(e.to_string()))
        })
        .collect()
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let format: TableFormat = args
        .format
        .parse()
        .map_err(|e: crate::simulate::SimError| CliError::Input(e.to_string()))?;
    let functions: Vec<TestFunction> = parse_list(&args.functions)?;
    let laws: Vec<ErrorLaw> = parse_list(&args.laws)?;
    let estimators: Vec<Estimator> = parse_list(&args.estimators)?;
    let workers = resolve_workers(
        args.workers,
        std::env::var("ROBUST_PSPLINE_WORKERS").ok().as_deref(),
    )?;

    let config = SimConfig {
        n: args.n,
        reps: args.reps,
        functions,
        error_laws: laws,
        estimators,
        seed: args.seed,
        parallel_workers: workers,
    };
    println!("seed: {}", config.seed);
    let report = run_monte_carlo(&config).map_err(|e| CliError::Input(e.to_string()))?;
    print!("{}", report_table(&report, format));

    if let Some(out) = &args.out {
        let json = report_table(&report, TableFormat::Json);
        std::fs::write(out, json)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}
