//! Robust loss families: the objective `rho`, its derivative `psi`, and the
//! IRWLS weight `psi(r) / r`.
//!
//! All losses are normalized so that `psi'(0) = 1` (quadratic behavior with
//! unit curvature near zero), which makes the IRWLS weight of a vanishing
//! residual exactly 1 for every family.

use serde::{Deserialize, Serialize};

/// Huber tuning constant giving 95% efficiency under Gaussian errors.
pub const HUBER_DEFAULT_C: f64 = 1.345;

/// Tukey bisquare tuning constant giving 95% efficiency under Gaussian
/// errors.
pub const TUKEY_DEFAULT_C: f64 = 4.685;

/// The smoothed Huber blend interval is `[c - delta, c + delta]` with
/// `delta = c * SMOOTH_BLEND_FRACTION`.
const SMOOTH_BLEND_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    /// `rho(r) = r^2 / 2`; the classical least-squares objective.
    Quadratic,
    /// Quadratic core with linear tails beyond `c`.
    Huber,
    /// Huber with the derivative kink at `|r| = c` replaced by a quadratic
    /// blend on `[c - delta, c + delta]`, making `psi` continuously
    /// differentiable.
    SmoothedHuber,
    /// Tukey bisquare: redescending, saturating at `c^2 / 6`.
    Tukey,
}

/// A loss family together with its tuning constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    pub c: f64,
}

impl LossSpec {
    /// Least squares; the tuning constant is irrelevant and stored as 1.
    pub fn quadratic() -> Self {
        Self {
            family: LossFamily::Quadratic,
            c: 1.0,
        }
    }

    pub fn huber(c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "tuning constant must be positive");
        Self {
            family: LossFamily::Huber,
            c,
        }
    }

    pub fn smoothed_huber(c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "tuning constant must be positive");
        Self {
            family: LossFamily::SmoothedHuber,
            c,
        }
    }

    pub fn tukey(c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "tuning constant must be positive");
        Self {
            family: LossFamily::Tukey,
            c,
        }
    }

    /// Whether `rho` is convex, which guarantees IRWLS descends the
    /// penalized objective at every iteration.
    pub fn is_convex(&self) -> bool {
        !matches!(self.family, LossFamily::Tukey)
    }

    /// The default tuning constant for a family.
    pub fn default_c(family: LossFamily) -> f64 {
        match family {
            LossFamily::Quadratic => 1.0,
            LossFamily::Huber | LossFamily::SmoothedHuber => HUBER_DEFAULT_C,
            LossFamily::Tukey => TUKEY_DEFAULT_C,
        }
    }
}

/// Loss value `rho(r)`. Even, nonnegative, zero at the origin.
pub fn rho(spec: LossSpec, r: f64) -> f64 {
    let c = spec.c;
    let a = r.abs();
    match spec.family {
        LossFamily::Quadratic => 0.5 * r * r,
        LossFamily::Huber => {
            if a <= c {
                0.5 * r * r
            } else {
                c * a - 0.5 * c * c
            }
        }
        LossFamily::SmoothedHuber => {
            let delta = c * SMOOTH_BLEND_FRACTION;
            let lo = c - delta;
            if a <= lo {
                0.5 * r * r
            } else if a < c + delta {
                // Integral of the blended psi below.
                let s = a - lo;
                0.5 * lo * lo + lo * s + 0.5 * s * s - s * s * s / (12.0 * delta)
            } else {
                // Same linear tail slope as Huber, shifted down by the
                // constant delta^2 / 6 that the smoothing removes.
                c * a - 0.5 * c * c - delta * delta / 6.0
            }
        }
        LossFamily::Tukey => {
            if a <= c {
                let u = 1.0 - (r / c) * (r / c);
                c * c / 6.0 * (1.0 - u * u * u)
            } else {
                c * c / 6.0
            }
        }
    }
}

/// Influence function `psi(r) = rho'(r)`. Odd.
pub fn psi(spec: LossSpec, r: f64) -> f64 {
    let c = spec.c;
    let a = r.abs();
    match spec.family {
        LossFamily::Quadratic => r,
        LossFamily::Huber => {
            if a <= c {
                r
            } else {
                c * r.signum()
            }
        }
        LossFamily::SmoothedHuber => {
            let delta = c * SMOOTH_BLEND_FRACTION;
            let lo = c - delta;
            if a <= lo {
                r
            } else if a < c + delta {
                let s = a - lo;
                (lo + s - s * s / (4.0 * delta)) * r.signum()
            } else {
                c * r.signum()
            }
        }
        LossFamily::Tukey => {
            if a <= c {
                let u = 1.0 - (r / c) * (r / c);
                r * u * u
            } else {
                0.0
            }
        }
    }
}

/// IRWLS weight `psi(r) / r`, extended by continuity to `psi'(0) = 1` at the
/// origin. Always in `[0, 1]`.
pub fn weight(spec: LossSpec, r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        psi(spec, r) / r
    }
}
