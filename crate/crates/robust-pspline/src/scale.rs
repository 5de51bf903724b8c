//! Preliminary scale estimation from pseudo-residuals.
//!
//! Pseudo-residuals difference out a smooth trend without fitting anything:
//! `eps_i = w_i y_{i-1} + s_i y_{i+1} - y_i` with the interpolation weights
//! `w_i = (x_{i+1} - x_i) / (x_{i+1} - x_{i-1})` and
//! `s_i = (x_i - x_{i-1}) / (x_{i+1} - x_{i-1})`, so for exactly linear data
//! they vanish and for noisy data `eps_i / sqrt(w_i^2 + s_i^2 + 1)` has the
//! noise standard deviation. Quartile- and median-based summaries of the
//! standardized pseudo-residuals give outlier-resistant scale estimates; the
//! mean of their squares gives the classical (non-robust) variance estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{interpolated_quantile, median};

/// Interquartile range of a standard normal: scale IQR estimates by its
/// inverse to be consistent for the Gaussian standard deviation.
const NORMAL_IQR: f64 = 1.349;

/// Median absolute deviation of a standard normal.
const NORMAL_MAD: f64 = 0.6745;

#[derive(Error, Debug)]
pub enum ScaleError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("design points must be strictly increasing (violation at index {index})")]
    UnsortedDesign { index: usize },
    #[error("non-finite value in input at index {index}")]
    NonFinite { index: usize },
}

/// Pseudo-residuals of a response sequence on a strictly increasing design,
/// together with the interpolation weights and standardization factors
/// `sqrt(w_i^2 + s_i^2 + 1)` needed to give them unit noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoResiduals {
    pub eps: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub std_factor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustScaleMethod {
    /// Interquartile range over 1.349.
    Iqr,
    /// Median absolute deviation about the median, over 0.6745.
    Mad,
}

/// Computes pseudo-residuals at the interior points `i = 1 .. n - 1`.
pub fn pseudo_residuals(xs: &[f64], ys: &[f64]) -> Result<PseudoResiduals, ScaleError> {
    let n = xs.len().min(ys.len());
    if xs.len() != ys.len() || n < 3 {
        return Err(ScaleError::TooFewObservations { needed: 3, got: n });
    }
    for i in 0..n {
        if !xs[i].is_finite() || !ys[i].is_finite() {
            return Err(ScaleError::NonFinite { index: i });
        }
    }
    for i in 1..n {
        if xs[i] <= xs[i - 1] {
            return Err(ScaleError::UnsortedDesign { index: i });
        }
    }
    let m = n - 2;
    let mut eps = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m);
    let mut s = Vec::with_capacity(m);
    let mut std_factor = Vec::with_capacity(m);
    for i in 1..n - 1 {
        let span = xs[i + 1] - xs[i - 1];
        let wi = (xs[i + 1] - xs[i]) / span;
        let si = (xs[i] - xs[i - 1]) / span;
        eps.push(wi * ys[i - 1] + si * ys[i + 1] - ys[i]);
        std_factor.push((wi * wi + si * si + 1.0).sqrt());
        w.push(wi);
        s.push(si);
    }
    Ok(PseudoResiduals {
        eps,
        w,
        s,
        std_factor,
    })
}

/// Non-robust noise-variance estimate: the mean squared standardized
/// pseudo-residual. Consistent for `sigma^2` under smooth trends, but a
/// single gross outlier can move it arbitrarily far.
pub fn gasser_variance(pr: &PseudoResiduals) -> f64 {
    let m = pr.eps.len();
    pr.eps
        .iter()
        .zip(&pr.std_factor)
        .map(|(e, f)| {
            let z = e / f;
            z * z
        })
        .sum::<f64>()
        / m as f64
}

/// Robust noise-scale estimate from standardized pseudo-residuals, using the
/// interquartile range or the median absolute deviation normalized to be
/// consistent for the Gaussian standard deviation.
pub fn robust_scale(pr: &PseudoResiduals, method: RobustScaleMethod) -> Result<f64, ScaleError> {
    if pr.eps.len() < 3 {
        return Err(ScaleError::TooFewObservations {
            needed: 5,
            got: pr.eps.len() + 2,
        });
    }
    let mut z: Vec<f64> = pr
        .eps
        .iter()
        .zip(&pr.std_factor)
        .map(|(e, f)| e / f)
        .collect();
    match method {
        RobustScaleMethod::Iqr => {
            z.sort_by(f64::total_cmp);
            let iqr = interpolated_quantile(&z, 0.75) - interpolated_quantile(&z, 0.25);
            Ok(iqr / NORMAL_IQR)
        }
        RobustScaleMethod::Mad => {
            let med = median(&z);
            let dev: Vec<f64> = z.iter().map(|v| (v - med).abs()).collect();
            Ok(median(&dev) / NORMAL_MAD)
        }
    }
}

/// Noise-scale estimate from first differences of the responses:
/// `median(|y_{i+1} - y_i|) / (sqrt(2) * 0.6745)`. Needs no design points
/// and tolerates up to a quarter of the data being wild.
pub fn diff_median_scale(ys: &[f64]) -> Result<f64, ScaleError> {
    if ys.len() < 2 {
        return Err(ScaleError::TooFewObservations {
            needed: 2,
            got: ys.len(),
        });
    }
    if let Some(i) = ys.iter().position(|v| !v.is_finite()) {
        return Err(ScaleError::NonFinite { index: i });
    }
    let diffs: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok(median(&diffs) / (std::f64::consts::SQRT_2 * NORMAL_MAD))
}
