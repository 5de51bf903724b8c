//! Integrated squared-derivative penalty matrices.
//!
//! `D[i][j] = ∫ B_i^(q)(x) B_j^(q)(x) dx` over the knot domain. On each knot
//! interval the integrand is a polynomial of degree `2(p - 1 - q)`, so
//! Gauss-Legendre quadrature with `p - q` nodes per interval is exact up to
//! roundoff. Local support makes `D` symmetric banded with bandwidth
//! `p - 1`, and its null space is exactly the degree-(q-1) polynomials.

use thiserror::Error;

use crate::basis::{eval_basis_deriv, KnotVector};

#[derive(Error, Debug)]
pub enum PenaltyError {
    #[error("derivative order q = {q} must satisfy 1 <= q <= p - 1 for spline order p = {p}")]
    InvalidOrder { q: usize, p: usize },
    #[error("coefficient vector has length {got}, but the penalty dimension is {dim}")]
    DimensionMismatch { got: usize, dim: usize },
}

/// Symmetric banded penalty matrix in lower storage:
/// `bands[d][i] = D[i + d][i]` for diagonals `d = 0 ..= p - 1`.
#[derive(Debug, Clone)]
pub struct PenaltyMatrix {
    dim: usize,
    bandwidth: usize,
    deriv_order: usize,
    bands: Vec<Vec<f64>>,
}

impl PenaltyMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sub-diagonals carrying nonzeros (`p - 1`).
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// The derivative order `q` the matrix integrates.
    pub fn deriv_order(&self) -> usize {
        self.deriv_order
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bandwidth {
            0.0
        } else {
            self.bands[d][lo]
        }
    }

    /// Matrix-vector product `D beta`.
    pub fn mul(&self, beta: &[f64]) -> Result<Vec<f64>, PenaltyError> {
        if beta.len() != self.dim {
            return Err(PenaltyError::DimensionMismatch {
                got: beta.len(),
                dim: self.dim,
            });
        }
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            out[i] += self.bands[0][i] * beta[i];
        }
        for d in 1..=self.bandwidth {
            for i in 0..self.dim - d {
                out[i + d] += self.bands[d][i] * beta[i];
                out[i] += self.bands[d][i] * beta[i + d];
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Assembles the order-`q` derivative penalty for the basis on `knots`.
pub fn penalty_matrix(knots: &KnotVector, q: usize) -> Result<PenaltyMatrix, PenaltyError> {
    let p = knots.order();
    if q == 0 || q >= p {
        return Err(PenaltyError::InvalidOrder { q, p });
    }
    let dim = knots.dim();
    let bandwidth = p - 1;
    let mut bands: Vec<Vec<f64>> = (0..p).map(|d| vec![0.0; dim - d]).collect();

    let (nodes, weights) = gauss_legendre(p - q);
    let t = knots.augmented();
    // Distinct breakpoints are T_{p-1} .. T_{p+K}; interval mu = [T_mu, T_{mu+1}].
    for mu in (p - 1)..(p + knots.interior().len()) {
        let (a, b) = (t[mu], t[mu + 1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&z, &wg) in nodes.iter().zip(&weights) {
            let x = mid + half * z;
            let w = half * wg;
            let derivs = eval_basis_deriv(knots, x, q)
                .expect("interior quadrature node cannot leave the domain");
            // Only functions mu - p + 1 ..= mu are supported on this interval.
            for i in (mu + 1 - p)..=mu {
                for j in i..=mu {
                    bands[j - i][i] += w * derivs[i] * derivs[j];
                }
            }
        }
    }
    Ok(PenaltyMatrix {
        dim,
        bandwidth,
        deriv_order: q,
        bands,
    })
}

/// Quadratic form `beta^T D beta` (the integrated squared `q`-th derivative
/// of the spline with coefficients `beta`). Nonnegative up to roundoff.
pub fn roughness(penalty: &PenaltyMatrix, beta: &[f64]) -> Result<f64, PenaltyError> {
    if beta.len() != penalty.dim {
        return Err(PenaltyError::DimensionMismatch {
            got: beta.len(),
            dim: penalty.dim,
        });
    }
    let mut acc = 0.0;
    for i in 0..penalty.dim {
        acc += penalty.bands[0][i] * beta[i] * beta[i];
    }
    for d in 1..=penalty.bandwidth {
        for i in 0..penalty.dim - d {
            acc += 2.0 * penalty.bands[d][i] * beta[i] * beta[i + d];
        }
    }
    Ok(acc)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre polynomial from the Chebyshev-based initial guess. Exact (up to
/// roundoff) for polynomials of degree `2m - 1`.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..(m + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_m and P_m' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        // m == 1 has the root at 0 where the dp formula above is 0/-1; the
        // loop still converges to x = 0 and the weight formula below needs
        // dp at the root, so recompute for the degenerate case.
        if m == 1 {
            x = 0.0;
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}
