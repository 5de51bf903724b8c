//! M-type penalized spline fitting.
//!
//! The estimator minimizes
//!
//! ```text
//! J(beta) = (1/n) sum_i rho((y_i - B_i beta) / sigma_hat)
//!           + lambda * beta^T D beta
//! ```
//!
//! over spline coefficients `beta`, where `sigma_hat` is a preliminary
//! robust scale from pseudo-residuals and `D` the integrated
//! squared-derivative penalty. Iteratively reweighted least squares maps
//! this to a sequence of banded penalized least-squares problems
//! `(B^T W B + 2 n lambda sigma_hat^2 D) beta = B^T W y`; for convex losses
//! each iteration descends `J`. The smoothing parameter comes from
//! minimizing a weighted GCV score over `log10(lambda)` with a
//! one-dimensional Nelder-Mead search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{self, design_matrix, make_knots, DesignMatrix, KnotVector};
use crate::linalg::{self, smoother_trace, BandedSpd};
use crate::loss::{self, weight, LossFamily, LossSpec};
use crate::penalty::{self, penalty_matrix, roughness, PenaltyMatrix};
use crate::scale::{self, diff_median_scale, gasser_variance, pseudo_residuals, robust_scale};
use crate::stats::median;

#[derive(Error, Debug)]
pub enum FitError {
    #[error("design construction failed: {0}")]
    Design(#[from] basis::BasisError),
    #[error("penalty construction failed: {0}")]
    Penalty(#[from] penalty::PenaltyError),
    #[error("scale estimation failed: {0}")]
    Scale(#[from] scale::ScaleError),
    #[error("weighted normal equations could not be solved: {0}")]
    SingularFit(#[from] linalg::LinalgError),
    #[error(
        "GCV is degenerate: smoother trace {trace:.3} reaches the sample size {n} \
         (lambda is too small for this design)"
    )]
    DegenerateGcv { trace: f64, n: usize },
    #[error("lambda selection failed: no GCV evaluation succeeded in the search range")]
    SelectionFailed,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("non-finite value in input data at index {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How the preliminary scale `sigma_hat` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    /// Interquartile range of standardized pseudo-residuals (default).
    Iqr,
    /// Median absolute deviation of standardized pseudo-residuals.
    Mad,
    /// Median absolute first difference of the responses.
    DiffMedian,
    /// Square root of the mean squared standardized pseudo-residual
    /// (non-robust).
    Gasser,
    /// A user-supplied scale, bypassing estimation.
    Fixed(f64),
}

/// How the smoothing parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Minimize GCV over `log10(lambda)` by Nelder-Mead.
    Auto,
    /// Use this value as-is.
    Fixed(f64),
}

/// Full fitting configuration. The defaults are cubic splines (`p = 4`) with
/// a second-derivative penalty (`q = 2`), at most 40 interior knots, Huber
/// loss at 95% Gaussian efficiency, IQR scale, and GCV-selected lambda.
///
/// The quartile-based scale methods need at least five observations; for
/// n in {3, 4} they fall back to the Gasser variance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss: LossSpec,
    /// Spline order (degree + 1).
    pub p: usize,
    /// Penalized derivative order, `1 <= q <= p - 1`.
    pub q: usize,
    /// Cap on the number of interior knots.
    pub k_max: usize,
    pub scale_method: ScaleMethod,
    pub lambda: LambdaRule,
    /// IRWLS stops when the relative coefficient step falls below this.
    pub irwls_tol: f64,
    pub irwls_max_iter: usize,
    /// Nelder-Mead starting point in `log10(lambda / lambda_ref)`.
    pub nm_start: f64,
    /// Cap on GCV evaluations during the lambda search.
    pub nm_max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::huber(loss::HUBER_DEFAULT_C),
            p: 4,
            q: 2,
            k_max: 40,
            scale_method: ScaleMethod::Iqr,
            lambda: LambdaRule::Auto,
            irwls_tol: 1e-8,
            irwls_max_iter: 100,
            nm_start: 0.0,
            nm_max_iter: 200,
        }
    }
}

/// A fitted model: everything needed to evaluate, diagnose, and serialize
/// the fit. `xs`/`ys` are the (sorted, finite) data the coefficients were
/// estimated from, so a deserialized result is self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub knots: KnotVector,
    pub beta: Vec<f64>,
    pub sigma_hat: f64,
    pub lambda_hat: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Final IRWLS weights, in `[0, 1]`, aligned with `xs`.
    pub weights: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Effective degrees of freedom: the smoother-matrix trace at the
    /// final weights.
    pub edf: f64,
    /// GCV score at `lambda_hat`; `None` if the trace reached the sample
    /// size (possible only with a user-fixed lambda) or overflowed.
    pub gcv: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of one IRWLS run.
#[derive(Debug, Clone)]
pub struct IrwlsOutcome {
    pub beta: Vec<f64>,
    /// Weights evaluated at the final coefficients.
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective at the final coefficients.
    pub objective: f64,
    /// Number of iterations at which the objective increased. Always 0 for
    /// convex losses; counted only for them.
    pub descent_violations: usize,
}

/// The penalized objective `J(beta)`.
pub fn penalized_objective(
    design: &DesignMatrix,
    pen: &PenaltyMatrix,
    ys: &[f64],
    spec: LossSpec,
    sigma: f64,
    lambda: f64,
    beta: &[f64],
) -> f64 {
    let fitted = design.mul_coeffs(beta);
    let n = ys.len() as f64;
    let data: f64 = ys
        .iter()
        .zip(&fitted)
        .map(|(y, f)| loss::rho(spec, (y - f) / sigma))
        .sum::<f64>()
        / n;
    data + lambda * roughness(pen, beta).expect("dimensions validated by caller")
}

/// Gradient of the penalized objective:
/// `-(1/(n sigma)) sum_i psi(r_i / sigma) B_i + 2 lambda D beta`.
pub fn estimating_equation(
    design: &DesignMatrix,
    pen: &PenaltyMatrix,
    ys: &[f64],
    spec: LossSpec,
    sigma: f64,
    lambda: f64,
    beta: &[f64],
) -> Vec<f64> {
    let fitted = design.mul_coeffs(beta);
    let n = ys.len() as f64;
    let psis: Vec<f64> = ys
        .iter()
        .zip(&fitted)
        .map(|(y, f)| -loss::psi(spec, (y - f) / sigma) / (n * sigma))
        .collect();
    let mut grad = design.mul_transpose(&psis);
    let dj = pen.mul(beta).expect("dimensions validated by caller");
    for (g, d) in grad.iter_mut().zip(&dj) {
        *g += 2.0 * lambda * d;
    }
    grad
}

/// Iteratively reweighted least squares from the starting point `beta0`.
///
/// Each iteration solves the banded system
/// `(B^T W B + 2 n lambda sigma^2 D) beta = B^T W y` with weights
/// `W_i = psi(r_i / sigma) / (r_i / sigma)` from the previous iterate, and
/// stops when the relative coefficient step falls below `tol` or the
/// weights reach a fixed point. If every weight falls below 1e-12 (possible
/// for redescending losses started far from the data) the iteration aborts
/// with `converged = false` instead of attempting a singular solve.
#[allow(clippy::too_many_arguments)]
pub fn irwls(
    design: &DesignMatrix,
    pen: &PenaltyMatrix,
    ys: &[f64],
    spec: LossSpec,
    sigma: f64,
    lambda: f64,
    beta0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<IrwlsOutcome, FitError> {
    let n = design.n_rows();
    let dim = design.n_cols();
    if ys.len() != n {
        return Err(FitError::InvalidConfig(format!(
            "response length {} does not match design rows {n}",
            ys.len()
        )));
    }
    if beta0.len() != dim {
        return Err(FitError::InvalidConfig(format!(
            "starting point length {} does not match basis dimension {dim}",
            beta0.len()
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FitError::InvalidConfig(format!(
            "scale sigma must be positive and finite, got {sigma}"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(FitError::InvalidConfig(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }

    let coeff = 2.0 * n as f64 * lambda * sigma * sigma;
    let weights_at = |beta: &[f64]| -> Vec<f64> {
        design
            .mul_coeffs(beta)
            .iter()
            .zip(ys)
            .map(|(f, y)| weight(spec, (y - f) / sigma))
            .collect()
    };

    let mut beta = beta0.to_vec();
    let mut w = weights_at(&beta);
    let mut objective = penalized_objective(design, pen, ys, spec, sigma, lambda, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut descent_violations = 0;

    for m in 1..=max_iter {
        if w.iter().all(|&wi| wi < 1e-12) {
            // Every observation is effectively rejected; the reweighted
            // problem is singular and the iteration cannot proceed.
            break;
        }
        let system = BandedSpd::normal_equations(design, &w, pen, coeff)?;
        let wy: Vec<f64> = w.iter().zip(ys).map(|(wi, y)| wi * y).collect();
        let rhs = design.mul_transpose(&wy);
        let factor = system.cholesky()?;
        let next = factor.solve(&rhs)?;
        iterations = m;

        let beta_norm = beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let step = beta
            .iter()
            .zip(&next)
            .fold(0.0f64, |a, (b, nb)| a.max((nb - b).abs()));
        beta = next;

        let next_objective = penalized_objective(design, pen, ys, spec, sigma, lambda, &beta);
        // The slack absorbs evaluation roundoff: near the fixed point the
        // true decrement underflows the ~1e-10 relative accuracy of the
        // objective itself, while a genuine ascent (a majorization bug)
        // would overshoot this by orders of magnitude.
        if spec.is_convex() && next_objective > objective + 1e-8 * (1.0 + objective.abs()) {
            descent_violations += 1;
        }
        objective = next_objective;

        let w_next = weights_at(&beta);
        let w_step = w
            .iter()
            .zip(&w_next)
            .fold(0.0f64, |a, (u, v)| a.max((v - u).abs()));
        w = w_next;

        if step <= tol * (1.0 + beta_norm) || w_step <= 1e-15 {
            converged = true;
            break;
        }
    }

    Ok(IrwlsOutcome {
        weights: w,
        iterations,
        converged,
        objective,
        descent_violations,
        beta,
    })
}

/// A GCV evaluation: the score, the smoother trace behind it, and the IRWLS
/// run it was computed from.
#[derive(Debug, Clone)]
pub struct GcvEvaluation {
    pub gcv: f64,
    pub trace: f64,
    pub outcome: IrwlsOutcome,
}

/// Weighted generalized cross-validation score at `lambda`:
/// `GCV = n^{-1} sum_i W_i r_i^2 / (1 - n^{-1} Tr H)^2`, with the weights
/// and hat matrix frozen at the converged IRWLS fit.
#[allow(clippy::too_many_arguments)]
pub fn gcv_score(
    design: &DesignMatrix,
    pen: &PenaltyMatrix,
    ys: &[f64],
    spec: LossSpec,
    sigma: f64,
    lambda: f64,
    beta0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<GcvEvaluation, FitError> {
    let outcome = irwls(design, pen, ys, spec, sigma, lambda, beta0, tol, max_iter)?;
    let n = design.n_rows();
    let coeff = 2.0 * n as f64 * lambda * sigma * sigma;
    let system = BandedSpd::normal_equations(design, &outcome.weights, pen, coeff)?;
    let factor = system.cholesky()?;
    let trace = smoother_trace(design, &outcome.weights, &factor)?;
    if trace >= n as f64 {
        return Err(FitError::DegenerateGcv { trace, n });
    }
    let fitted = design.mul_coeffs(&outcome.beta);
    let rss: f64 = ys
        .iter()
        .zip(&fitted)
        .zip(&outcome.weights)
        .map(|((y, f), w)| w * (y - f) * (y - f))
        .sum();
    let denom = 1.0 - trace / n as f64;
    let gcv = rss / n as f64 / (denom * denom);
    Ok(GcvEvaluation {
        gcv,
        trace,
        outcome,
    })
}

/// Reference smoothing parameter making the search exponent dimensionless:
/// `lambda_ref = range^(2q - 1) / proxy^2` where `proxy` is the
/// first-difference noise scale of the responses (falling back to their
/// standard deviation, then 1).
pub fn lambda_reference(x_range: f64, ys: &[f64], q: usize) -> f64 {
    let mut proxy = diff_median_scale(ys).unwrap_or(0.0);
    if !(proxy > 0.0) || !proxy.is_finite() {
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        proxy = var.sqrt();
    }
    if !(proxy > 0.0) || !proxy.is_finite() {
        proxy = 1.0;
    }
    x_range.powi(2 * q as i32 - 1) / (proxy * proxy)
}

/// Result of the GCV lambda search.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Selected exponent `log10(lambda / lambda_ref)`.
    pub log10_offset: f64,
    pub gcv: f64,
    /// Number of GCV evaluations spent.
    pub evaluations: usize,
}

/// Starting coefficients for IRWLS at `lambda`: the quadratic-loss penalized
/// fit, chained through a Huber fit when the target loss redescends (Tukey),
/// so the redescending iteration starts at a robust solution rather than the
/// outlier-chasing least-squares one.
#[allow(clippy::too_many_arguments)]
pub fn initial_beta(
    design: &DesignMatrix,
    pen: &PenaltyMatrix,
    ys: &[f64],
    spec: LossSpec,
    sigma: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, FitError> {
    let zeros = vec![0.0; design.n_cols()];
    let quad = irwls(
        design,
        pen,
        ys,
        LossSpec::quadratic(),
        sigma,
        lambda,
        &zeros,
        tol,
        max_iter,
    )?;
    if spec.family != LossFamily::Tukey {
        return Ok(quad.beta);
    }
    let huber = irwls(
        design,
        pen,
        ys,
        LossSpec::huber(loss::HUBER_DEFAULT_C),
        sigma,
        lambda,
        &quad.beta,
        tol,
        max_iter,
    )?;
    Ok(huber.beta)
}

/// Minimizes the GCV score over `log10(lambda / lambda_ref)` in `[-10, 10]`:
/// a coarse scan over the interval picks the starting basin, and a
/// one-dimensional Nelder-Mead search (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5) polishes from the best scanned point. The
/// scan matters because the GCV curve is often bimodal — it flattens into a
/// plateau at the penalty null-space fit for large lambda, and a local
/// search started on that plateau never finds an interior minimum.
/// Evaluations that fail numerically score `+inf`; IRWLS warm-starts from
/// the previous successful evaluation.
pub fn select_lambda(
    design: &DesignMatrix,
    pen: &PenaltyMatrix,
    ys: &[f64],
    spec: LossSpec,
    sigma: f64,
    config: &FitConfig,
    lambda_ref: f64,
) -> Result<LambdaSelection, FitError> {
    let mut warm: Option<Vec<f64>> = None;
    let mut successes = 0usize;
    let mut evaluations = 0usize;
    let mut eval = |u: f64| -> f64 {
        evaluations += 1;
        let lambda = lambda_ref * 10f64.powf(u);
        let beta0 = match &warm {
            Some(b) => b.clone(),
            None => match initial_beta(
                design,
                pen,
                ys,
                spec,
                sigma,
                lambda,
                config.irwls_tol,
                config.irwls_max_iter,
            ) {
                Ok(b) => b,
                Err(_) => return f64::INFINITY,
            },
        };
        match gcv_score(
            design,
            pen,
            ys,
            spec,
            sigma,
            lambda,
            &beta0,
            config.irwls_tol,
            config.irwls_max_iter,
        ) {
            Ok(ev) if ev.gcv.is_finite() => {
                warm = Some(ev.outcome.beta);
                successes += 1;
                ev.gcv
            }
            _ => f64::INFINITY,
        }
    };

    // Coarse scan, ascending so the warm-start chain moves smoothly from
    // the near-interpolating fit toward the null-space fit.
    let mut candidates: Vec<f64> = (-5..=5).map(|k| 2.0 * k as f64).collect();
    let start = config.nm_start.clamp(-10.0, 10.0);
    if candidates.iter().all(|&u| (u - start).abs() > 1e-9) {
        let pos = candidates.partition_point(|&u| u < start);
        candidates.insert(pos, start);
    }
    let mut best = (start, f64::INFINITY);
    let mut scanned = 0usize;
    for &u in candidates.iter().take(config.nm_max_iter) {
        let g = eval(u);
        scanned += 1;
        if g < best.1 {
            best = (u, g);
        }
    }

    let remaining = config.nm_max_iter.saturating_sub(scanned);
    let (u_best, f_best) = if remaining >= 2 {
        let polished = nelder_mead_1d(&mut eval, best.0, -10.0, 10.0, remaining);
        if polished.1 < best.1 {
            polished
        } else {
            best
        }
    } else {
        best
    };
    if successes == 0 || !f_best.is_finite() {
        return Err(FitError::SelectionFailed);
    }
    Ok(LambdaSelection {
        lambda: lambda_ref * 10f64.powf(u_best),
        log10_offset: u_best,
        gcv: f_best,
        evaluations,
    })
}

/// One-dimensional Nelder-Mead on `[lo, hi]` starting from the two-point
/// simplex `{u0, u0 + 1}` (`{u0, u0 - 1}` when `u0` sits at the upper
/// bound, so the simplex never degenerates). Returns the best point and
/// value seen.
fn nelder_mead_1d(
    f: &mut impl FnMut(f64) -> f64,
    u0: f64,
    lo: f64,
    hi: f64,
    max_evals: usize,
) -> (f64, f64) {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let clamp = |u: f64| u.clamp(lo, hi);
    let mut evals = 0usize;

    let second = if u0 + 1.0 <= hi { u0 + 1.0 } else { u0 - 1.0 };
    let mut a = (clamp(u0), 0.0);
    let mut b = (clamp(second), 0.0);
    a.1 = f(a.0);
    b.1 = f(b.0);
    evals += 2;

    while evals < max_evals {
        // Keep `a` the better point.
        if b.1 < a.1 {
            std::mem::swap(&mut a, &mut b);
        }
        if (a.0 - b.0).abs() <= 1e-6 * (1.0 + a.0.abs()) {
            break;
        }
        let xr = clamp(a.0 + ALPHA * (a.0 - b.0));
        let fr = f(xr);
        evals += 1;
        if fr < a.1 {
            // Reflected point is the best yet: try expanding past it.
            if evals >= max_evals {
                b = (xr, fr);
                break;
            }
            let xe = clamp(a.0 + GAMMA * (a.0 - b.0));
            let fe = f(xe);
            evals += 1;
            b = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < b.1 {
            // Better than the worst: outside contraction.
            if evals >= max_evals {
                b = (xr, fr);
                break;
            }
            let xc = clamp(a.0 + RHO * (a.0 - b.0));
            let fc = f(xc);
            evals += 1;
            b = if fc <= fr { (xc, fc) } else { (xr, fr) };
        } else {
            // Inside contraction, shrinking toward the best point if that
            // fails too.
            let xc = clamp(a.0 + RHO * (b.0 - a.0));
            let fc = f(xc);
            evals += 1;
            if fc < b.1 {
                b = (xc, fc);
            } else if evals < max_evals {
                let xs = clamp(a.0 + SIGMA * (b.0 - a.0));
                let fs = f(xs);
                evals += 1;
                b = (xs, fs);
            } else {
                break;
            }
        }
    }
    if b.1 < a.1 {
        std::mem::swap(&mut a, &mut b);
    }
    a
}

/// Fits an M-type penalized spline to `(xs, ys)`.
///
/// The pipeline sorts the data by `xs`, places quantile knots, assembles the
/// design and penalty, estimates the preliminary scale, selects lambda by
/// GCV (unless fixed), and runs IRWLS from the quadratic (or
/// quadratic-then-Huber) starting point. Deterministic given inputs and
/// configuration.
pub fn fit(xs: &[f64], ys: &[f64], config: &FitConfig) -> Result<FitResult, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::InvalidConfig(format!(
            "xs has length {}, ys has length {}",
            xs.len(),
            ys.len()
        )));
    }
    if config.p < 2 {
        return Err(FitError::InvalidConfig(format!(
            "spline order p must be at least 2, got {}",
            config.p
        )));
    }
    if config.q == 0 || config.q >= config.p {
        return Err(FitError::InvalidConfig(format!(
            "penalty order q = {} must satisfy 1 <= q <= p - 1 = {}",
            config.q,
            config.p - 1
        )));
    }
    if !(config.irwls_tol > 0.0) || config.irwls_max_iter == 0 {
        return Err(FitError::InvalidConfig(
            "irwls_tol must be positive and irwls_max_iter nonzero".into(),
        ));
    }
    if !(config.loss.c > 0.0 && config.loss.c.is_finite()) {
        return Err(FitError::InvalidConfig(format!(
            "loss tuning constant must be positive and finite, got {}",
            config.loss.c
        )));
    }
    let needed = (config.p + 1).max(3);
    if xs.len() < needed {
        return Err(FitError::TooFewObservations {
            needed,
            got: xs.len(),
        });
    }
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(FitError::NonFinite(i));
        }
    }

    // Sort by x, carrying y along (stable, so tied xs keep input order).
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let xs_s: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let ys_s: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let n = xs_s.len();

    let knots = make_knots(&xs_s, config.p, config.k_max)?;
    let design = design_matrix(&knots, &xs_s)?;
    let pen = penalty_matrix(&knots, config.q)?;

    let sigma_raw = match config.scale_method {
        ScaleMethod::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(FitError::InvalidConfig(format!(
                    "fixed scale must be positive and finite, got {s}"
                )));
            }
            s
        }
        ScaleMethod::DiffMedian => diff_median_scale(&ys_s)?,
        ScaleMethod::Gasser => gasser_variance(&pseudo_residuals(&xs_s, &ys_s)?).sqrt(),
        ScaleMethod::Iqr | ScaleMethod::Mad => {
            let pr = pseudo_residuals(&xs_s, &ys_s)?;
            if n < 5 {
                // Too few points for quartiles; use the mean-square estimate.
                gasser_variance(&pr).sqrt()
            } else {
                let method = if config.scale_method == ScaleMethod::Iqr {
                    scale::RobustScaleMethod::Iqr
                } else {
                    scale::RobustScaleMethod::Mad
                };
                robust_scale(&pr, method)?
            }
        }
    };
    // Guard the zero-noise case (exactly interpolable data makes every
    // pseudo-residual vanish): floor the scale at a sliver of the response
    // spread so residual ratios stay finite.
    let med_y = median(&ys_s);
    let spread = ys_s.iter().fold(0.0f64, |a, y| a.max((y - med_y).abs()));
    let sigma = sigma_raw.max(1e-8 * spread).max(1e-290);

    let lambda_ref = lambda_reference(knots.hi() - knots.lo(), &ys_s, config.q);
    let lambda_hat = match config.lambda {
        LambdaRule::Fixed(l) => {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(FitError::InvalidConfig(format!(
                    "fixed lambda must be nonnegative and finite, got {l}"
                )));
            }
            l
        }
        LambdaRule::Auto => {
            select_lambda(&design, &pen, &ys_s, config.loss, sigma, config, lambda_ref)?.lambda
        }
    };

    let beta0 = initial_beta(
        &design,
        &pen,
        &ys_s,
        config.loss,
        sigma,
        lambda_hat,
        config.irwls_tol,
        config.irwls_max_iter,
    )?;
    let outcome = irwls(
        &design,
        &pen,
        &ys_s,
        config.loss,
        sigma,
        lambda_hat,
        &beta0,
        config.irwls_tol,
        config.irwls_max_iter,
    )?;

    let coeff = 2.0 * n as f64 * lambda_hat * sigma * sigma;
    let system = BandedSpd::normal_equations(&design, &outcome.weights, &pen, coeff)?;
    let factor = system.cholesky()?;
    let edf = smoother_trace(&design, &outcome.weights, &factor)?;
    let fitted = design.mul_coeffs(&outcome.beta);
    let gcv = if edf < n as f64 {
        let rss: f64 = ys_s
            .iter()
            .zip(&fitted)
            .zip(&outcome.weights)
            .map(|((y, f), w)| w * (y - f) * (y - f))
            .sum();
        let denom = 1.0 - edf / n as f64;
        let g = rss / n as f64 / (denom * denom);
        g.is_finite().then_some(g)
    } else {
        None
    };

    Ok(FitResult {
        knots,
        beta: outcome.beta,
        sigma_hat: sigma,
        lambda_hat,
        xs: xs_s,
        ys: ys_s,
        weights: outcome.weights,
        fitted,
        edf,
        gcv,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

/// Evaluates a fitted spline at new points. Points outside the knot domain
/// are an error (no extrapolation), reported with their position.
pub fn predict(result: &FitResult, xs_new: &[f64]) -> Result<Vec<f64>, FitError> {
    let design = design_matrix(&result.knots, xs_new)?;
    Ok(design.mul_coeffs(&result.beta))
}
