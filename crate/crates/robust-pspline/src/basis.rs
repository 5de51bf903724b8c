//! B-spline bases on data-driven knot sequences.
//!
//! Knots are placed at quantiles of the unique design points with the count
//! rule `K = min(floor(#unique / 4), k_max)`; the boundary knots are repeated
//! `order` times so the basis spans the full closed interval. Evaluation uses
//! the numerically stable triangular recursion on the knot span containing
//! the query point; derivatives come from the knot-difference recurrence
//! applied to lower-order basis values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::interpolated_quantile;

#[derive(Error, Debug)]
pub enum BasisError {
    #[error("spline order must be at least 1")]
    ZeroOrder,
    #[error("need at least {needed} distinct x values for order {order}, got {got}")]
    TooFewDistinct {
        needed: usize,
        got: usize,
        order: usize,
    },
    #[error("non-finite value in input at index {0}")]
    NonFinite(usize),
    #[error("knot sequence is degenerate: {0}")]
    DegenerateKnots(String),
    #[error("x = {x} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("row {row}: x = {x} lies outside the basis domain [{lo}, {hi}]")]
    RowOutOfDomain {
        row: usize,
        x: f64,
        lo: f64,
        hi: f64,
    },
    #[error("derivative order {m} must be below the spline order {order}")]
    DerivativeOrder { m: usize, order: usize },
}

/// An open B-spline knot sequence on `[lo, hi]`: `order` copies of each
/// boundary knot around `interior` strictly increasing interior knots.
///
/// With `K` interior knots the basis has `K + order` functions; `order` is
/// one more than the polynomial degree (order 4 = cubic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    lo: f64,
    hi: f64,
    interior: Vec<f64>,
    order: usize,
    /// Full sequence with repeated boundaries, kept alongside the parts so
    /// evaluation never rebuilds it.
    augmented: Vec<f64>,
}

impl KnotVector {
    /// Builds a knot vector from explicit parts, validating that the
    /// boundaries are finite and ordered and the interior knots are strictly
    /// increasing inside `(lo, hi)`.
    pub fn new(lo: f64, hi: f64, interior: Vec<f64>, order: usize) -> Result<Self, BasisError> {
        if order == 0 {
            return Err(BasisError::ZeroOrder);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(BasisError::DegenerateKnots(format!(
                "boundaries [{lo}, {hi}] must be finite"
            )));
        }
        if !(lo < hi) {
            return Err(BasisError::DegenerateKnots(format!(
                "boundaries must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        let mut prev = lo;
        for (i, &t) in interior.iter().enumerate() {
            if !t.is_finite() {
                return Err(BasisError::NonFinite(i));
            }
            if !(prev < t && t < hi) {
                return Err(BasisError::DegenerateKnots(format!(
                    "interior knot {t} at position {i} is not strictly inside the previous \
                     knot {prev} and the upper boundary {hi}"
                )));
            }
            prev = t;
        }
        let mut augmented = Vec::with_capacity(2 * order + interior.len());
        augmented.extend(std::iter::repeat(lo).take(order));
        augmented.extend_from_slice(&interior);
        augmented.extend(std::iter::repeat(hi).take(order));
        Ok(Self {
            lo,
            hi,
            interior,
            order,
            augmented,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// Full augmented sequence (boundaries repeated `order` times).
    pub fn augmented(&self) -> &[f64] {
        &self.augmented
    }

    /// Number of basis functions: interior knot count plus order.
    pub fn dim(&self) -> usize {
        self.interior.len() + self.order
    }

    /// Index `mu` of the half-open knot interval `[T_mu, T_{mu+1})`
    /// containing `x`, with `x = hi` assigned to the last interval so the
    /// basis is right-continuous everywhere and left-continuous at `hi`.
    fn span_index(&self, x: f64) -> usize {
        if x >= self.hi {
            return self.order - 1 + self.interior.len();
        }
        self.order - 1 + self.interior.partition_point(|&t| t <= x)
    }

    /// Triangular recursion: values of the `k` order-`k` basis functions
    /// with indices `mu - k + 1 ..= mu`, the only ones that can be nonzero
    /// on knot interval `mu`. All intermediate quantities are nonnegative,
    /// so no cancellation occurs.
    fn span_values(&self, mu: usize, x: f64, k: usize) -> Vec<f64> {
        let t = &self.augmented;
        let mut vals = vec![0.0; k];
        vals[0] = 1.0;
        let mut dr = vec![0.0; k.saturating_sub(1)];
        let mut dl = vec![0.0; k.saturating_sub(1)];
        for j in 1..k {
            dr[j - 1] = t[mu + j] - x;
            dl[j - 1] = x - t[mu + 1 - j];
            let mut saved = 0.0;
            for r in 0..j {
                let term = vals[r] / (dr[r] + dl[j - 1 - r]);
                vals[r] = saved + dr[r] * term;
                saved = dl[j - 1 - r] * term;
            }
            vals[j] = saved;
        }
        vals
    }

    fn check_domain(&self, x: f64) -> Result<(), BasisError> {
        if !x.is_finite() || x < self.lo || x > self.hi {
            return Err(BasisError::OutOfDomain {
                x,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }
}

/// Places `K = min(floor(#unique / 4), k_max)` interior knots at the
/// `(k + 1) / (K + 2)` quantiles (`k = 1..=K`) of the unique sorted design
/// points, with the data extremes as boundary knots.
pub fn make_knots(xs: &[f64], order: usize, k_max: usize) -> Result<KnotVector, BasisError> {
    if order == 0 {
        return Err(BasisError::ZeroOrder);
    }
    if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
        return Err(BasisError::NonFinite(i));
    }
    let mut unique = xs.to_vec();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    if unique.len() < order + 1 {
        return Err(BasisError::TooFewDistinct {
            needed: order + 1,
            got: unique.len(),
            order,
        });
    }
    let k = (unique.len() / 4).min(k_max);
    let interior: Vec<f64> = (1..=k)
        .map(|j| interpolated_quantile(&unique, (j + 1) as f64 / (k + 2) as f64))
        .collect();
    KnotVector::new(unique[0], unique[unique.len() - 1], interior, order)
}

/// Values of all `dim` basis functions at `x`, of which at most `order` are
/// nonzero. Entries are in `[0, 1]` and sum to 1 (partition of unity).
pub fn eval_basis(knots: &KnotVector, x: f64) -> Result<Vec<f64>, BasisError> {
    knots.check_domain(x)?;
    let p = knots.order;
    let mu = knots.span_index(x);
    let vals = knots.span_values(mu, x, p);
    let mut out = vec![0.0; knots.dim()];
    out[mu + 1 - p..=mu].copy_from_slice(&vals);
    Ok(out)
}

/// `m`-th derivative of every basis function at `x` (`m = 0` reproduces
/// [`eval_basis`]). Derivatives are taken from the right at interior knots
/// and from the left at `hi`.
pub fn eval_basis_deriv(knots: &KnotVector, x: f64, m: usize) -> Result<Vec<f64>, BasisError> {
    let p = knots.order;
    if m >= p {
        return Err(BasisError::DerivativeOrder { m, order: p });
    }
    if m == 0 {
        return eval_basis(knots, x);
    }
    knots.check_domain(x)?;
    let t = &knots.augmented;
    let mu = knots.span_index(x);

    // Order-(p - m) values, scattered into a full-length work vector indexed
    // like the order-(p - m) family B_{i, p-m}, i = 0 .. dim + m - 1.
    let low = p - m;
    let mut work = vec![0.0; knots.dim() + m];
    let vals = knots.span_values(mu, x, low);
    work[mu + 1 - low..=mu].copy_from_slice(&vals);

    // Raise the order back to p, differentiating at each step:
    // d/dx B_{i, k+1} = k * (B_{i,k} / (T_{i+k} - T_i)
    //                        - B_{i+1,k} / (T_{i+k+1} - T_{i+1})),
    // applied to already-differentiated values by linearity. Zero-width
    // denominators (fully coincident knots) contribute zero.
    for ord in low..p {
        let len = knots.dim() + p - 1 - ord;
        for i in 0..len {
            let left = {
                let den = t[i + ord] - t[i];
                if den > 0.0 {
                    work[i] / den
                } else {
                    0.0
                }
            };
            let right = {
                let den = t[i + ord + 1] - t[i + 1];
                if den > 0.0 {
                    work[i + 1] / den
                } else {
                    0.0
                }
            };
            work[i] = ord as f64 * (left - right);
        }
        work.truncate(len);
    }
    Ok(work)
}

/// Row-sparse design matrix: row `i` holds the `order` (at most) nonzero
/// basis values at `xs[i]`, stored as a start column plus a dense band.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    order: usize,
    starts: Vec<usize>,
    values: Vec<f64>,
}

/// Evaluates the basis at every design point. Duplicate `xs` are allowed;
/// each out-of-domain point reports its row index.
pub fn design_matrix(knots: &KnotVector, xs: &[f64]) -> Result<DesignMatrix, BasisError> {
    let p = knots.order;
    let mut starts = Vec::with_capacity(xs.len());
    let mut values = Vec::with_capacity(xs.len() * p);
    for (row, &x) in xs.iter().enumerate() {
        knots
            .check_domain(x)
            .map_err(|_| BasisError::RowOutOfDomain {
                row,
                x,
                lo: knots.lo,
                hi: knots.hi,
            })?;
        let mu = knots.span_index(x);
        starts.push(mu + 1 - p);
        values.extend_from_slice(&knots.span_values(mu, x, p));
    }
    Ok(DesignMatrix {
        n_rows: xs.len(),
        n_cols: knots.dim(),
        order: p,
        starts,
        values,
    })
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// First column of row `i`'s nonzero band.
    pub fn row_start(&self, i: usize) -> usize {
        self.starts[i]
    }

    /// The `order` stored values of row `i`.
    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[i * self.order..(i + 1) * self.order]
    }

    /// Entry `(i, j)`, zero outside the stored band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let s = self.starts[i];
        if j >= s && j < s + self.order {
            self.values[i * self.order + (j - s)]
        } else {
            0.0
        }
    }

    /// Matrix-vector product `B beta`.
    pub fn mul_coeffs(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.n_cols, "coefficient length mismatch");
        (0..self.n_rows)
            .map(|i| {
                let s = self.starts[i];
                self.row_values(i)
                    .iter()
                    .zip(&beta[s..s + self.order])
                    .map(|(b, c)| b * c)
                    .sum()
            })
            .collect()
    }

    /// Transposed product `B^T v`.
    pub fn mul_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_rows, "vector length mismatch");
        let mut out = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let s = self.starts[i];
            for (k, b) in self.row_values(i).iter().enumerate() {
                out[s + k] += b * v[i];
            }
        }
        out
    }

    /// Dense copy, for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| (0..self.n_cols).map(|j| self.get(i, j)).collect())
            .collect()
    }
}
