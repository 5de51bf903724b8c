//! Shared helpers for the integration suites: independent reference
//! implementations (divided-difference B-splines, high-order quadrature of
//! penalty integrals) and small random-problem generators.

#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use robust_pspline::basis::KnotVector;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Confluent divided difference of the truncated power `t -> (t - x)_+^deg`
/// over the (possibly repeated) points `ts`, used by the classical
/// divided-difference characterization of B-splines. Repeated points take
/// the derivative limit, which is well-defined as long as `x` is not one of
/// them.
fn truncated_power_divided_difference(ts: &[f64], x: f64, deg: usize) -> f64 {
    let k = ts.len() - 1;
    if ts[k] == ts[0] {
        // All points coincide: g^(k)(t0) / k!.
        if k > deg {
            return 0.0;
        }
        let t = ts[0];
        if t <= x {
            return 0.0;
        }
        let mut value = (t - x).powi((deg - k) as i32);
        for i in 0..k {
            value *= (deg - i) as f64 / (i + 1) as f64;
        }
        value
    } else {
        let left = truncated_power_divided_difference(&ts[..k], x, deg);
        let right = truncated_power_divided_difference(&ts[1..], x, deg);
        (right - left) / (ts[k] - ts[0])
    }
}

/// Reference B-spline value: `B_j(x) = (t_{j+p} - t_j) [t_j, ..., t_{j+p}]
/// (t - x)_+^{p-1}` with confluent divided differences over the augmented
/// knots. Valid for `x` strictly between two augmented knots.
pub fn bspline_oracle(knots: &KnotVector, j: usize, x: f64) -> f64 {
    let p = knots.order();
    let t = knots.augmented();
    let window = &t[j..=j + p];
    (window[p] - window[0]) * truncated_power_divided_difference(window, x, p - 1)
}

/// Interior knots drawn without replacement from a `step`-spaced grid on
/// `(0, 1)`, so adjacent knots are never closer than `step`. Wider steps
/// keep divided differences and high-order penalty entries
/// well-conditioned for oracle comparisons.
pub fn spaced_interior(rng: &mut ChaCha8Rng, count: usize, step: f64) -> Vec<f64> {
    let slots = (1.0 / step).round() as usize - 1;
    let grid: Vec<f64> = (1..=slots).map(|i| i as f64 * step).collect();
    assert!(
        count <= grid.len(),
        "not enough grid slots for {count} knots"
    );
    let mut picks: Vec<f64> = grid.choose_multiple(rng, count).copied().collect();
    picks.sort_by(f64::total_cmp);
    picks
}

/// A point of `[0, 1]` at distance at least `margin` from every augmented
/// knot.
pub fn point_away_from_knots(rng: &mut ChaCha8Rng, knots: &KnotVector, margin: f64) -> f64 {
    loop {
        let x: f64 = rng.gen();
        if knots.augmented().iter().all(|t| (x - t).abs() >= margin) {
            return x;
        }
    }
}

/// Dense penalty matrix by composite quadrature with panels aligned to the
/// knot intervals, using the 5-point open Newton-Cotes rule per panel. The
/// rule is exact for polynomials up to degree 5, hence for every
/// piecewise-polynomial product `B_i^(q) B_j^(q)` of degree
/// `2(p - 1 - q) <= 4` arising here; its nodes are strictly interior to
/// each panel, which matters because the integrand can jump at the knots
/// and the basis code evaluates one-sided there.
pub fn dense_penalty_quadrature(knots: &KnotVector, q: usize, min_points: usize) -> Vec<Vec<f64>> {
    let dim = knots.dim();
    // Neumaier-compensated accumulation: tens of thousands of nodes feed
    // each entry, and plain summation drifts by about machine epsilon
    // times the entry magnitude per thousand terms, which an oracle
    // cannot afford.
    let mut sums = vec![vec![0.0f64; dim]; dim];
    let mut comps = vec![vec![0.0f64; dim]; dim];
    let mut breaks = vec![knots.lo()];
    breaks.extend_from_slice(knots.interior());
    breaks.push(knots.hi());
    let intervals = breaks.len() - 1;
    let panels_per_interval = min_points.div_ceil(5 * intervals).max(1);

    const OPEN_NC5: [f64; 5] = [11.0, -14.0, 26.0, -14.0, 11.0];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / panels_per_interval as f64;
        for panel in 0..panels_per_interval {
            let left = a + panel as f64 * h;
            for (k, coeff) in OPEN_NC5.iter().enumerate() {
                let x = left + (k + 1) as f64 * h / 6.0;
                let deriv = robust_pspline::basis::eval_basis_deriv(knots, x, q)
                    .expect("quadrature nodes stay inside the domain");
                let weight = coeff * h / 20.0;
                for i in 0..dim {
                    if deriv[i] == 0.0 {
                        continue;
                    }
                    for j in 0..dim {
                        let term = weight * deriv[i] * deriv[j];
                        let sum = sums[i][j];
                        let new = sum + term;
                        comps[i][j] += if sum.abs() >= term.abs() {
                            (sum - new) + term
                        } else {
                            (term - new) + sum
                        };
                        sums[i][j] = new;
                    }
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            sums[i][j] += comps[i][j];
        }
    }
    sums
}

/// Strictly increasing covariates: a jittered uniform grid on `[0, 1]`.
pub fn jittered_grid(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..n)
        .map(|i| (i as f64 + 0.2 + 0.6 * rng.gen::<f64>()) / n as f64)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Number of (numerically) zero eigenvalues of a symmetric dense matrix,
/// relative to its largest eigenvalue.
pub fn null_space_dimension(dense: &[Vec<f64>]) -> usize {
    let dim = dense.len();
    let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| dense[i][j]);
    let eigen = nalgebra::SymmetricEigen::new(m);
    let max = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &e| a.max(e.abs()));
    eigen
        .eigenvalues
        .iter()
        .filter(|&&e| e.abs() <= 1e-10 * max.max(1e-300))
        .count()
}
