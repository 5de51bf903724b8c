//! Monte-Carlo benchmarking harness.
//!
//! Generates data from `Y_i = f(t_i) + e_i` with `t_i = i/n` for three test
//! functions and four error laws (Gaussian, Student t with 3 df, a
//! scale-contaminated Gaussian mixture, and the slash distribution), fits
//! the robust and least-squares penalized spline estimators to the same
//! draws, and tabulates mean and median MSE per cell.
//!
//! Replications run in parallel; each derives its random stream from a
//! counter over the full function-by-law grid, so any cell's draws are
//! identical no matter which subset of the grid is requested, how many
//! worker threads run, or how replications are scheduled.

use std::fmt;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitter::{fit, FitConfig};
use crate::loss::LossSpec;
use crate::stats::median;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("unknown {kind} `{got}` (expected one of {valid})")]
    UnknownName {
        kind: &'static str,
        got: String,
        valid: &'static str,
    },
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

/// The three benchmark regression functions on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `sin(2 pi t) + exp(-3 (t - 0.5)^2) + 0.4`: smooth, global shape.
    F1,
    /// `1 / (0.1 + t) + 8 exp(-400 (t - 0.5)^2)`: boundary spike plus a
    /// sharp central bump.
    F2,
    /// `phi((t - 0.5) / 0.15) - phi((t - 0.8) / 0.04)`: a broad bump next
    /// to a narrow dip, with `phi` the standard Gaussian density.
    F3,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::F1, TestFunction::F2, TestFunction::F3];

    /// Position in the full grid; fixed independently of any requested
    /// subset so that random streams are stable.
    pub fn canonical_index(self) -> usize {
        match self {
            TestFunction::F1 => 0,
            TestFunction::F2 => 1,
            TestFunction::F3 => 2,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestFunction::F1 => "f1",
            TestFunction::F2 => "f2",
            TestFunction::F3 => "f3",
        })
    }
}

impl FromStr for TestFunction {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "f1" => Ok(TestFunction::F1),
            "f2" => Ok(TestFunction::F2),
            "f3" => Ok(TestFunction::F3),
            _ => Err(SimError::UnknownName {
                kind: "test function",
                got: s.to_string(),
                valid: "f1, f2, f3",
            }),
        }
    }
}

/// Error distributions, ordered from light to catastrophically heavy tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    /// Standard normal.
    Gaussian,
    /// Student t with 3 degrees of freedom.
    T3,
    /// `0.85 N(0, 1) + 0.15 N(0, 81)`: scale contamination.
    Mixture,
    /// `Z / U` with `Z ~ N(0,1)` and `U ~ Uniform(0,1)`: no finite moments.
    Slash,
}

impl ErrorLaw {
    pub const ALL: [ErrorLaw; 4] = [
        ErrorLaw::Gaussian,
        ErrorLaw::T3,
        ErrorLaw::Mixture,
        ErrorLaw::Slash,
    ];

    pub fn canonical_index(self) -> usize {
        match self {
            ErrorLaw::Gaussian => 0,
            ErrorLaw::T3 => 1,
            ErrorLaw::Mixture => 2,
            ErrorLaw::Slash => 3,
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorLaw::Gaussian => "gaussian",
            ErrorLaw::T3 => "t3",
            ErrorLaw::Mixture => "mixture",
            ErrorLaw::Slash => "slash",
        })
    }
}

impl FromStr for ErrorLaw {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "gaussian" => Ok(ErrorLaw::Gaussian),
            "t3" => Ok(ErrorLaw::T3),
            "mixture" => Ok(ErrorLaw::Mixture),
            "slash" => Ok(ErrorLaw::Slash),
            _ => Err(SimError::UnknownName {
                kind: "error law",
                got: s.to_string(),
                valid: "gaussian, t3, mixture, slash",
            }),
        }
    }
}

/// The two estimators under comparison. Both share knot placement, scale
/// estimation, and GCV lambda selection; only the loss differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Huber loss at 95% Gaussian efficiency (`c = 1.345`).
    HuberPspline,
    /// Quadratic loss: the classical penalized least-squares spline.
    LsPspline,
}

impl Estimator {
    pub const ALL: [Estimator; 2] = [Estimator::HuberPspline, Estimator::LsPspline];

    pub fn canonical_index(self) -> usize {
        match self {
            Estimator::HuberPspline => 0,
            Estimator::LsPspline => 1,
        }
    }

    /// The fitting configuration this estimator runs with.
    pub fn fit_config(self) -> FitConfig {
        match self {
            Estimator::HuberPspline => FitConfig::default(),
            Estimator::LsPspline => FitConfig {
                loss: LossSpec::quadratic(),
                ..FitConfig::default()
            },
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::HuberPspline => "huber_pspline",
            Estimator::LsPspline => "ls_pspline",
        })
    }
}

impl FromStr for Estimator {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "huber_pspline" | "huber" => Ok(Estimator::HuberPspline),
            "ls_pspline" | "ls" => Ok(Estimator::LsPspline),
            _ => Err(SimError::UnknownName {
                kind: "estimator",
                got: s.to_string(),
                valid: "huber_pspline, ls_pspline",
            }),
        }
    }
}

/// Study layout: which cells of the function-by-law-by-estimator grid to
/// run, at what size, and from which seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Observations per replication (at least 20).
    pub n: usize,
    /// Replications per cell (at least 1).
    pub reps: usize,
    pub functions: Vec<TestFunction>,
    pub error_laws: Vec<ErrorLaw>,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    /// Worker threads; 0 picks the runtime default. Excluded from
    /// serialized reports because it cannot affect the results.
    #[serde(skip)]
    pub parallel_workers: usize,
}

/// Aggregated results for one (function, law, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub function: TestFunction,
    pub law: ErrorLaw,
    pub estimator: Estimator,
    /// Mean over successful replications; NaN if all failed.
    pub mean_mse: f64,
    pub median_mse: f64,
    /// Replications whose fit did not complete.
    pub failures: usize,
    /// Per-replication MSEs of the successful fits, in replication order.
    pub mses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub cells: Vec<CellReport>,
}

/// Table output formats for [`report_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Tsv,
    Markdown,
    Json,
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableFormat::Tsv => "tsv",
            TableFormat::Markdown => "markdown",
            TableFormat::Json => "json",
        })
    }
}

impl FromStr for TableFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "tsv" => Ok(TableFormat::Tsv),
            "markdown" => Ok(TableFormat::Markdown),
            "json" => Ok(TableFormat::Json),
            _ => Err(SimError::UnknownName {
                kind: "table format",
                got: s.to_string(),
                valid: "tsv, markdown, json",
            }),
        }
    }
}

/// Evaluates a benchmark function at `t` in `[0, 1]`.
pub fn test_function(id: TestFunction, t: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&t));
    match id {
        TestFunction::F1 => {
            (2.0 * std::f64::consts::PI * t).sin() + (-3.0 * (t - 0.5) * (t - 0.5)).exp() + 0.4
        }
        TestFunction::F2 => 1.0 / (0.1 + t) + 8.0 * (-400.0 * (t - 0.5) * (t - 0.5)).exp(),
        TestFunction::F3 => normal_density((t - 0.5) / 0.15) - normal_density((t - 0.8) / 0.04),
    }
}

fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Draws `n` errors from `law`. The slash draw divides a standard normal by
/// an independent uniform on `(0, 1]` (the half-open flip avoids a zero
/// divisor).
pub fn sample_errors<R: Rng + ?Sized>(law: ErrorLaw, n: usize, rng: &mut R) -> Vec<f64> {
    match law {
        ErrorLaw::Gaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        ErrorLaw::T3 => {
            let t = StudentT::new(3.0).expect("3 degrees of freedom is a valid Student t");
            (0..n).map(|_| t.sample(rng)).collect()
        }
        ErrorLaw::Mixture => (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if rng.gen::<f64>() < 0.15 {
                    9.0 * z
                } else {
                    z
                }
            })
            .collect(),
        ErrorLaw::Slash => (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = 1.0 - rng.gen::<f64>();
                z / u
            })
            .collect(),
    }
}

fn validate(config: &SimConfig) -> Result<(), SimError> {
    if config.n < 20 {
        return Err(SimError::InvalidConfig(format!(
            "n must be at least 20, got {}",
            config.n
        )));
    }
    if config.reps == 0 {
        return Err(SimError::InvalidConfig("reps must be at least 1".into()));
    }
    if config.functions.is_empty() || config.error_laws.is_empty() || config.estimators.is_empty() {
        return Err(SimError::InvalidConfig(
            "functions, error_laws, and estimators must all be non-empty".into(),
        ));
    }
    let dup = |name: &str, indices: Vec<usize>| -> Result<(), SimError> {
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(SimError::InvalidConfig(format!(
                "duplicate {name} requested"
            )));
        }
        Ok(())
    };
    dup(
        "function",
        config
            .functions
            .iter()
            .map(|f| f.canonical_index())
            .collect(),
    )?;
    dup(
        "error law",
        config
            .error_laws
            .iter()
            .map(|l| l.canonical_index())
            .collect(),
    )?;
    dup(
        "estimator",
        config
            .estimators
            .iter()
            .map(|e| e.canonical_index())
            .collect(),
    )?;
    Ok(())
}

/// Runs the study described by `config`.
///
/// Replication `r` of cell `(f, l)` uses the ChaCha stream
/// `(canonical(f) * 4 + canonical(l)) * reps + r` of the seed, and both
/// estimators see the same draw, so reports are bitwise identical across
/// runs, worker counts, and grid subsets. Individual fit failures are
/// counted per cell rather than aborting the study.
pub fn run_monte_carlo(config: &SimConfig) -> Result<SimReport, SimError> {
    validate(config)?;
    let n = config.n;
    let xs: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let fit_configs: Vec<FitConfig> = config.estimators.iter().map(|e| e.fit_config()).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel_workers)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;

    let mut cells = Vec::with_capacity(
        config.functions.len() * config.error_laws.len() * config.estimators.len(),
    );
    for &function in &config.functions {
        let truth: Vec<f64> = xs.iter().map(|&t| test_function(function, t)).collect();
        for &law in &config.error_laws {
            let cell_base = (function.canonical_index() * ErrorLaw::ALL.len()
                + law.canonical_index()) as u64
                * config.reps as u64;
            // One entry per replication, one inner entry per estimator;
            // `None` marks a failed fit.
            let per_rep: Vec<Vec<Option<f64>>> = pool.install(|| {
                (0..config.reps)
                    .into_par_iter()
                    .map(|rep| {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                        rng.set_stream(cell_base + rep as u64);
                        let errors = sample_errors(law, n, &mut rng);
                        let ys: Vec<f64> = truth.iter().zip(&errors).map(|(f, e)| f + e).collect();
                        fit_configs
                            .iter()
                            .map(|fc| {
                                fit(&xs, &ys, fc).ok().map(|r| {
                                    r.fitted
                                        .iter()
                                        .zip(&truth)
                                        .map(|(fh, ft)| (fh - ft) * (fh - ft))
                                        .sum::<f64>()
                                        / n as f64
                                })
                            })
                            .collect()
                    })
                    .collect()
            });
            for (ei, &estimator) in config.estimators.iter().enumerate() {
                let mses: Vec<f64> = per_rep.iter().filter_map(|r| r[ei]).collect();
                let failures = config.reps - mses.len();
                let mean_mse = if mses.is_empty() {
                    f64::NAN
                } else {
                    mses.iter().sum::<f64>() / mses.len() as f64
                };
                let median_mse = if mses.is_empty() {
                    f64::NAN
                } else {
                    median(&mses)
                };
                cells.push(CellReport {
                    function,
                    law,
                    estimator,
                    mean_mse,
                    median_mse,
                    failures,
                    mses,
                });
            }
        }
    }
    Ok(SimReport {
        config: config.clone(),
        cells,
    })
}

/// Formats `x` with three significant digits, the resolution used for the
/// benchmark tables.
pub fn format_sig3(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if exp > 15 {
        return format!("{x:.2e}");
    }
    let decimals = (2 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Renders a report as text: one row per (function, law) pair, one
/// mean/median column pair per estimator. The JSON format serializes the
/// whole report instead.
pub fn report_table(report: &SimReport, format: TableFormat) -> String {
    if format == TableFormat::Json {
        let mut text =
            serde_json::to_string_pretty(report).expect("report serialization cannot fail");
        text.push('\n');
        return text;
    }

    let mut header = vec!["function".to_string(), "law".to_string()];
    for est in &report.config.estimators {
        header.push(format!("{est}_mean"));
        header.push(format!("{est}_median"));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for &function in &report.config.functions {
        for &law in &report.config.error_laws {
            let mut row = vec![function.to_string(), law.to_string()];
            for &estimator in &report.config.estimators {
                let cell = report
                    .cells
                    .iter()
                    .find(|c| c.function == function && c.law == law && c.estimator == estimator);
                match cell {
                    Some(c) => {
                        row.push(format_sig3(c.mean_mse));
                        row.push(format_sig3(c.median_mse));
                    }
                    None => {
                        row.push("nan".to_string());
                        row.push("nan".to_string());
                    }
                }
            }
            rows.push(row);
        }
    }

    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            out.push_str(&header.join("\t"));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str("| ");
            out.push_str(&header.join(" | "));
            out.push_str(" |\n|");
            for _ in &header {
                out.push_str(" --- |");
            }
            out.push('\n');
            for row in rows {
                out.push_str("| ");
                out.push_str(&row.join(" | "));
                out.push_str(" |\n");
            }
        }
        TableFormat::Json => unreachable!("handled above"),
    }
    out
}
