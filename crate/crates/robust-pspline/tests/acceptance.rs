//! Acceptance gate: one test per release criterion, each printing a
//! `PASS` line (run with `--nocapture` to see them when everything is
//! green). The criteria pin correctness against independent oracles,
//! reproduce the reference Monte-Carlo MSE pattern at desk scale, and
//! verify determinism of the simulation harness.

mod common;

use std::time::Instant;

use rand::prelude::*;
use rand_distr::StandardNormal;

use robust_pspline::basis::{design_matrix, eval_basis, make_knots, KnotVector};
use robust_pspline::fitter::{estimating_equation, irwls, penalized_objective};
use robust_pspline::linalg::{smoother_trace, BandedSpd};
use robust_pspline::loss::{LossSpec, HUBER_DEFAULT_C, TUKEY_DEFAULT_C};
use robust_pspline::penalty::penalty_matrix;
use robust_pspline::scale::{
    diff_median_scale, gasser_variance, pseudo_residuals, robust_scale, RobustScaleMethod,
};
use robust_pspline::simulate::{
    run_monte_carlo, test_function, CellReport, ErrorLaw, Estimator, SimConfig, SimReport,
    TestFunction,
};

fn pass(number: usize, title: &str) {
    println!("acceptance criterion {number} ({title}): PASS");
}

#[test]
fn criterion_1_basis_matches_divided_difference_oracle() {
    let started = Instant::now();
    let mut rng = common::rng(101);

    for _ in 0..100 {
        let p = *[2usize, 3, 4].choose(&mut rng).unwrap();
        let k = rng.gen_range(0..=8usize);
        let interior = common::spaced_interior(&mut rng, k, 0.05);
        let knots = KnotVector::new(0.0, 1.0, interior, p).unwrap();
        for _ in 0..20 {
            let x = common::point_away_from_knots(&mut rng, &knots, 1e-3);
            let values = eval_basis(&knots, x).unwrap();
            let mut sum = 0.0;
            for (j, &value) in values.iter().enumerate() {
                let oracle = common::bspline_oracle(&knots, j, x);
                assert!(
                    (value - oracle).abs() <= 1e-8,
                    "p={p} k={k} j={j} x={x}: recursion {value} vs oracle {oracle}"
                );
                sum += value;
            }
            assert!((sum - 1.0).abs() <= 1e-10, "partition of unity: {sum}");
        }
    }

    // Partition of unity on a dense sweep of a single representative basis.
    let knots = KnotVector::new(0.0, 1.0, common::spaced_interior(&mut rng, 8, 0.05), 4).unwrap();
    for i in 0..10_000 {
        let x = i as f64 / 9_999.0;
        let sum: f64 = eval_basis(&knots, x).unwrap().iter().sum();
        assert!(
            (sum - 1.0).abs() <= 1e-10,
            "partition of unity at {x}: {sum}"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "criterion 1 took {elapsed:?}");
    pass(1, "basis recursion vs divided-difference oracle");
}

#[test]
fn criterion_2_penalty_matches_dense_quadrature() {
    let started = Instant::now();
    let mut rng = common::rng(202);

    for trial in 0..20 {
        let p = *[2usize, 3, 4].choose(&mut rng).unwrap();
        let q = rng.gen_range(1..p);
        // Entries of the q-th derivative penalty scale like the knot gap
        // to the power 1 - 2q; higher q needs wider gaps so that an
        // absolute 1e-9 comparison sits above the f64 roundoff floor of
        // both quadratures (entries reach ~3e5 already at q = 3 with
        // gap 0.2).
        let (step, k_cap) = match q {
            1 => (0.05, 8),
            2 => (0.1, 8),
            _ => (0.2, 4),
        };
        let k = rng.gen_range(0..=k_cap);
        let interior = common::spaced_interior(&mut rng, k, step);
        let knots = KnotVector::new(0.0, 1.0, interior, p).unwrap();
        let pen = penalty_matrix(&knots, q).unwrap();
        let dense = common::dense_penalty_quadrature(&knots, q, 10_000);
        let dim = knots.dim();
        for i in 0..dim {
            for j in 0..dim {
                assert!(
                    (pen.get(i, j) - dense[i][j]).abs() <= 1e-9,
                    "trial {trial} p={p} q={q} entry ({i},{j}): \
                     {} vs quadrature {}",
                    pen.get(i, j),
                    dense[i][j]
                );
            }
        }
        assert_eq!(
            common::null_space_dimension(&pen.to_dense()),
            q,
            "trial {trial}: null-space dimension for p={p}, q={q}"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "criterion 2 took {elapsed:?}");
    pass(2, "penalty vs dense quadrature oracle");
}

#[test]
fn criterion_3_solver_and_trace_match_dense_oracle() {
    let mut rng = common::rng(303);

    for trial in 0..100 {
        let n = rng.gen_range(30..=200usize);
        let p = *[2usize, 3, 4].choose(&mut rng).unwrap();
        let q = rng.gen_range(1..p);
        let k_max = rng.gen_range(1..=20usize);
        let xs = common::jittered_grid(&mut rng, n);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| (6.0 * x).sin() + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lambda = 10f64.powf(rng.gen_range(-6.0..=-1.0));

        let knots = make_knots(&xs, p, k_max).unwrap();
        let design = design_matrix(&knots, &xs).unwrap();
        let pen = penalty_matrix(&knots, q).unwrap();
        let dim = knots.dim();
        let beta0 = vec![0.0; dim];
        let out = irwls(
            &design,
            &pen,
            &ys,
            LossSpec::quadratic(),
            1.0,
            lambda,
            &beta0,
            1e-10,
            5,
        )
        .unwrap();

        // Dense reference solve of (B^T B + 2 n lambda D) beta = B^T y.
        let nn = xs.len();
        let b = nalgebra::DMatrix::from_fn(nn, dim, |i, j| design.get(i, j));
        let d = nalgebra::DMatrix::from_fn(dim, dim, |i, j| pen.get(i, j));
        let tau = 2.0 * nn as f64 * lambda;
        let gram = b.transpose() * &b;
        let m = &gram + tau * d;
        let lu = m.clone().lu();
        let y = nalgebra::DVector::from_vec(ys.clone());
        let beta_dense = lu.solve(&(b.transpose() * y)).unwrap();

        let denom = beta_dense.amax();
        let diff = (0..dim)
            .map(|j| (out.beta[j] - beta_dense[j]).abs())
            .fold(0.0f64, f64::max);
        assert!(
            diff <= 1e-8 * denom,
            "trial {trial} (n={nn}, p={p}, q={q}, lambda={lambda:.2e}): \
             coefficient gap {diff:.3e} vs scale {denom:.3e}"
        );

        let weights = vec![1.0; nn];
        let system = BandedSpd::normal_equations(&design, &weights, &pen, tau).unwrap();
        let factor = system.cholesky().unwrap();
        let trace = smoother_trace(&design, &weights, &factor).unwrap();
        let hat = lu.solve(&gram).unwrap();
        let trace_dense = hat.trace();
        assert!(
            (trace - trace_dense).abs() <= 1e-8 * trace_dense.max(1.0),
            "trial {trial}: trace {trace} vs dense {trace_dense}"
        );
    }
    pass(3, "banded solver and smoother trace vs dense oracle");
}

#[test]
fn criterion_4_gradient_matches_finite_differences() {
    let mut rng = common::rng(404);
    let xs = common::jittered_grid(&mut rng, 40);
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| (4.0 * x).cos() + 0.4 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let knots = make_knots(&xs, 4, 4).unwrap();
    let design = design_matrix(&knots, &xs).unwrap();
    let pen = penalty_matrix(&knots, 2).unwrap();
    let dim = knots.dim();
    let sigma = 0.7;
    let lambda = 1e-3;

    let losses = [
        LossSpec::smoothed_huber(HUBER_DEFAULT_C),
        LossSpec::tukey(TUKEY_DEFAULT_C),
        LossSpec::quadratic(),
    ];
    for spec in losses {
        for point in 0..20 {
            let beta: Vec<f64> = (0..dim)
                .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let grad = estimating_equation(&design, &pen, &ys, spec, sigma, lambda, &beta);
            let mut worst = 0.0f64;
            let scale = grad.iter().fold(1e-10f64, |a, g| a.max(g.abs()));
            for k in 0..dim {
                let h = 1e-6 * (1.0 + beta[k].abs());
                let mut up = beta.clone();
                up[k] += h;
                let mut down = beta.clone();
                down[k] -= h;
                let fd = (penalized_objective(&design, &pen, &ys, spec, sigma, lambda, &up)
                    - penalized_objective(&design, &pen, &ys, spec, sigma, lambda, &down))
                    / (2.0 * h);
                worst = worst.max((grad[k] - fd).abs());
            }
            assert!(
                worst <= 1e-6 * scale,
                "{spec:?} point {point}: gradient gap {worst:.3e} vs scale {scale:.3e}"
            );
        }
    }
    pass(
        4,
        "estimating-equation gradient vs central finite differences",
    );
}

#[test]
fn criterion_5_irwls_descends_for_convex_losses() {
    let mut rng = common::rng(505);

    for trial in 0..50 {
        let n = rng.gen_range(40..=120usize);
        let xs = common::jittered_grid(&mut rng, n);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let spike = if rng.gen::<f64>() < 0.08 {
                    12.0 * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                (7.0 * x).sin() + 0.6 * rng.sample::<f64, _>(StandardNormal) + spike
            })
            .collect();
        let spec = match trial % 3 {
            0 => LossSpec::huber(rng.gen_range(0.7..3.0)),
            1 => LossSpec::smoothed_huber(rng.gen_range(0.7..3.0)),
            _ => LossSpec::quadratic(),
        };
        let lambda = 10f64.powf(rng.gen_range(-5.0..=1.0));
        let knots = make_knots(&xs, 4, 12).unwrap();
        let design = design_matrix(&knots, &xs).unwrap();
        let pen = penalty_matrix(&knots, 2).unwrap();
        let beta0 = vec![0.0; knots.dim()];
        let out = irwls(&design, &pen, &ys, spec, 1.0, lambda, &beta0, 1e-9, 100).unwrap();
        assert_eq!(
            out.descent_violations, 0,
            "trial {trial} ({spec:?}, lambda={lambda:.2e}): objective increased"
        );
    }
    pass(5, "IRWLS objective descent across convex-loss fits");
}

fn cell<'r>(
    report: &'r SimReport,
    function: TestFunction,
    law: ErrorLaw,
    estimator: Estimator,
) -> &'r CellReport {
    report
        .cells
        .iter()
        .find(|c| c.function == function && c.law == law && c.estimator == estimator)
        .expect("requested cell missing from report")
}

#[test]
fn criterion_6_benchmark_grid_reproduces_reference_pattern() {
    let started = Instant::now();
    let base = SimConfig {
        n: 100,
        reps: 200,
        functions: vec![TestFunction::F1],
        error_laws: vec![ErrorLaw::Gaussian, ErrorLaw::Mixture, ErrorLaw::Slash],
        estimators: vec![Estimator::HuberPspline, Estimator::LsPspline],
        seed: 20260814,
        parallel_workers: 0,
    };
    let f1 = run_monte_carlo(&base).unwrap();
    let f3 = run_monte_carlo(&SimConfig {
        functions: vec![TestFunction::F3],
        error_laws: vec![ErrorLaw::T3],
        ..base.clone()
    })
    .unwrap();

    let h_gauss = cell(
        &f1,
        TestFunction::F1,
        ErrorLaw::Gaussian,
        Estimator::HuberPspline,
    );
    let l_gauss = cell(
        &f1,
        TestFunction::F1,
        ErrorLaw::Gaussian,
        Estimator::LsPspline,
    );
    assert!(
        (0.04..=0.11).contains(&h_gauss.mean_mse),
        "f1/gaussian huber mean MSE {} outside [0.04, 0.11]",
        h_gauss.mean_mse
    );
    let gap = (h_gauss.mean_mse - l_gauss.mean_mse).abs() / l_gauss.mean_mse;
    assert!(
        gap < 0.6,
        "f1/gaussian relative gap {gap:.3} (huber {}, ls {})",
        h_gauss.mean_mse,
        l_gauss.mean_mse
    );

    let h_mix = cell(
        &f1,
        TestFunction::F1,
        ErrorLaw::Mixture,
        Estimator::HuberPspline,
    );
    let l_mix = cell(
        &f1,
        TestFunction::F1,
        ErrorLaw::Mixture,
        Estimator::LsPspline,
    );
    assert!(
        l_mix.mean_mse >= 3.0 * h_mix.mean_mse,
        "f1/mixture: ls mean {} not >= 3x huber mean {}",
        l_mix.mean_mse,
        h_mix.mean_mse
    );

    let h_slash = cell(
        &f1,
        TestFunction::F1,
        ErrorLaw::Slash,
        Estimator::HuberPspline,
    );
    let l_slash = cell(&f1, TestFunction::F1, ErrorLaw::Slash, Estimator::LsPspline);
    assert!(
        h_slash.median_mse < l_slash.median_mse,
        "f1/slash: huber median {} not below ls median {}",
        h_slash.median_mse,
        l_slash.median_mse
    );
    assert!(
        l_slash.mean_mse / l_slash.median_mse > 10.0,
        "f1/slash: ls mean/median ratio {} not > 10",
        l_slash.mean_mse / l_slash.median_mse
    );

    let h_t3 = cell(&f3, TestFunction::F3, ErrorLaw::T3, Estimator::HuberPspline);
    let l_t3 = cell(&f3, TestFunction::F3, ErrorLaw::T3, Estimator::LsPspline);
    assert!(
        h_t3.mean_mse < l_t3.mean_mse,
        "f3/t3: huber mean {} not below ls mean {}",
        h_t3.mean_mse,
        l_t3.mean_mse
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 600.0,
        "criterion 6 took {elapsed:?}"
    );
    pass(
        6,
        "desk-scale benchmark reproduces the reference MSE pattern",
    );
}

#[test]
fn criterion_7_scale_estimators_consistency_and_contamination() {
    let n = 10_000usize;
    let sigma = 2.0;
    let xs: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let truth: Vec<f64> = xs
        .iter()
        .map(|&t| test_function(TestFunction::F1, t))
        .collect();

    let mut shifts = [0.0f64; 3]; // iqr, mad, diff
    let seeds = 10;
    for seed in 0..seeds {
        let mut rng = common::rng(700 + seed);
        let ys: Vec<f64> = truth
            .iter()
            .map(|f| f + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let pr = pseudo_residuals(&xs, &ys).unwrap();
        let estimates = [
            robust_scale(&pr, RobustScaleMethod::Iqr).unwrap(),
            robust_scale(&pr, RobustScaleMethod::Mad).unwrap(),
            diff_median_scale(&ys).unwrap(),
            gasser_variance(&pr).sqrt(),
        ];
        for (name, est) in ["iqr", "mad", "diff", "gasser"].iter().zip(estimates) {
            assert!(
                (est - sigma).abs() / sigma < 0.05,
                "seed {seed}: {name} estimate {est} not within 5% of {sigma}"
            );
        }

        // Contaminate a contiguous 10% block with +-1e6 (a corrupted
        // segment); alternating signs keep both tails loaded.
        let mut contaminated = ys.clone();
        let block = n / 10;
        for (offset, value) in contaminated[2_000..2_000 + block].iter_mut().enumerate() {
            *value += if offset % 2 == 0 { 1e6 } else { -1e6 };
        }
        let pr_c = pseudo_residuals(&xs, &contaminated).unwrap();
        let robust_c = [
            robust_scale(&pr_c, RobustScaleMethod::Iqr).unwrap(),
            robust_scale(&pr_c, RobustScaleMethod::Mad).unwrap(),
            diff_median_scale(&contaminated).unwrap(),
        ];
        for (shift, est) in shifts.iter_mut().zip(robust_c) {
            *shift += (est - sigma).abs() / sigma / seeds as f64;
        }
        let gasser_c = gasser_variance(&pr_c).sqrt();
        assert!(
            gasser_c / sigma > 10.0,
            "seed {seed}: gasser {gasser_c} did not diverge under contamination"
        );
    }
    for (name, shift) in ["iqr", "mad", "diff"].iter().zip(shifts) {
        assert!(
            shift < 0.5,
            "{name}: mean relative shift {shift:.3} under 10% contamination"
        );
    }
    pass(
        7,
        "scale estimators: 5% consistency, bounded shift, gasser divergence",
    );
}

#[test]
fn criterion_8_mse_decreases_at_the_expected_rate() {
    let base = SimConfig {
        n: 100,
        reps: 50,
        functions: vec![TestFunction::F1],
        error_laws: vec![ErrorLaw::Gaussian],
        estimators: vec![Estimator::HuberPspline, Estimator::LsPspline],
        seed: 8_088,
        parallel_workers: 0,
    };
    let small = run_monte_carlo(&base).unwrap();
    let large = run_monte_carlo(&SimConfig {
        n: 1_600,
        ..base.clone()
    })
    .unwrap();

    for estimator in [Estimator::HuberPspline, Estimator::LsPspline] {
        let at = |r: &SimReport| cell(r, TestFunction::F1, ErrorLaw::Gaussian, estimator).mean_mse;
        let (m100, m1600) = (at(&small), at(&large));
        assert!(
            m1600 <= m100 / 4.0,
            "{estimator}: mean MSE {m1600} at n=1600 vs {m100} at n=100"
        );
    }
    pass(8, "mean MSE shrinks by at least 4x from n=100 to n=1600");
}

#[test]
fn criterion_9_simulation_reports_are_byte_identical() {
    let base = SimConfig {
        n: 40,
        reps: 6,
        functions: vec![TestFunction::F1],
        error_laws: vec![ErrorLaw::Gaussian, ErrorLaw::Slash],
        estimators: vec![Estimator::HuberPspline, Estimator::LsPspline],
        seed: 909,
        parallel_workers: 1,
    };
    let serial = serde_json::to_string(&run_monte_carlo(&base).unwrap()).unwrap();
    let rerun = serde_json::to_string(&run_monte_carlo(&base).unwrap()).unwrap();
    let threaded = serde_json::to_string(
        &run_monte_carlo(&SimConfig {
            parallel_workers: 3,
            ..base.clone()
        })
        .unwrap(),
    )
    .unwrap();
    let default_pool = serde_json::to_string(
        &run_monte_carlo(&SimConfig {
            parallel_workers: 0,
            ..base
        })
        .unwrap(),
    )
    .unwrap();
    assert_eq!(serial, rerun, "same config, same worker count");
    assert_eq!(serial, threaded, "1 worker vs 3 workers");
    assert_eq!(serial, default_pool, "1 worker vs default pool");
    pass(
        9,
        "byte-identical simulation JSON across runs and worker counts",
    );
}
