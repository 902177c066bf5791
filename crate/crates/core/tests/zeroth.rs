mod common;

use common::*;
use lqrpg_core::lqr::{cost, exact_gradient, level_constants, LevelBounds, LinearSystem, LqrCost};
use lqrpg_core::matops::SymmetricPsdMatrix;
use lqrpg_core::sim::RngStream;
use lqrpg_core::zeroth::*;
use lqrpg_core::{Error, Matrix, OracleMethod};
use proptest::prelude::*;

fn scalar_sys() -> (LinearSystem, LqrCost) {
    let one = || Matrix::from_element(1, 1, 1.0);
    let sys = LinearSystem::new(
        Matrix::from_element(1, 1, 0.5),
        one(),
        SymmetricPsdMatrix::identity(1),
        SymmetricPsdMatrix::identity(1),
        SymmetricPsdMatrix::identity(1),
    )
    .unwrap();
    (sys, LqrCost::new(one(), one()).unwrap())
}

fn scalar_cost(k: f64) -> f64 {
    let f = 0.5 + k;
    (1.0 + k * k) / (1.0 - f * f)
}

#[test]
fn sphere_mean_and_isotropy() {
    let (n_u, n_x, v) = (2, 3, 0.3);
    let d = (n_u * n_x) as f64;
    let draws = 1_000_000;
    let mut rng = RngStream::new(1, 0);
    let mut mean = Matrix::zeros(n_u, n_x);
    let mut cov = Matrix::zeros(6, 6);
    for _ in 0..draws {
        let u = sample_sphere(n_u, n_x, v, &mut rng);
        mean += &u;
        let flat = lqrpg_core::Vector::from_column_slice(u.as_slice());
        cov.ger(1.0, &flat, &flat, 1.0);
    }
    mean /= draws as f64;
    cov /= draws as f64;
    let envelope = 3.0 * v / (d * draws as f64).sqrt();
    assert!(mean.abs().max() <= envelope, "{mean}");
    let target = v * v / d;
    assert!(max_abs_diff(&cov, &(Matrix::identity(6, 6) * target)) <= 0.05 * target, "{cov}");
}

#[test]
fn scalar_exact_cost_estimator_matches_smoothed_gradient() {
    // In one dimension the sphere is {−v, v} and the ball average of C′ is
    // the symmetric difference quotient.
    let (sys, c) = scalar_sys();
    let (k, v, n) = (0.0, 0.1, 1_000_000usize);
    let oracle = (scalar_cost(k + v) - scalar_cost(k - v)) / (2.0 * v);
    let params = ZeroOrderParams::new(v, 1, 1).unwrap();
    let mut rng = RngStream::new(2, 0);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let (g, _) = zeroth_order_estimate(&Matrix::from_element(1, 1, k), &params, &mut rng, |kk, _| {
            cost(&sys, &c, kk).ok()
        })
        .unwrap();
        sum += g[(0, 0)];
        sq += g[(0, 0)] * g[(0, 0)];
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - oracle).abs() <= 3.0 * se, "{mean} vs {oracle} (se {se})");
    assert!((oracle - 1.878_720_238_095_238_4).abs() < 1e-12);
}

#[test]
fn rollout_estimate_metadata_and_failures() {
    let (sys, c) = scalar_sys();
    let params = ZeroOrderParams::new(0.05, 30, 7).unwrap();
    let k = Matrix::zeros(1, 1);
    let s = direct_gradient_estimate(&sys, &c, &k, &params, &mut RngStream::new(3, 0)).unwrap();
    assert_eq!(s.method, OracleMethod::Direct);
    assert_eq!(s.samples, 210);
    assert_eq!(s.zeroth_params, Some(params));
    assert_eq!(s.diverged_rollouts, 0);
    let again = direct_gradient_estimate(&sys, &c, &k, &params, &mut RngStream::new(3, 0)).unwrap();
    assert_eq!(s.gradient, again.gradient);

    // Destabilized but finite rollouts are still averaged.
    let edge = Matrix::from_element(1, 1, 0.49);
    let p = ZeroOrderParams::new(0.05, 20, 50).unwrap();
    let s = direct_gradient_estimate(&sys, &c, &edge, &p, &mut RngStream::new(4, 0)).unwrap();
    assert_eq!(s.diverged_rollouts, 0);

    let far = Matrix::from_element(1, 1, 5.0);
    let p = ZeroOrderParams::new(0.01, 2000, 3).unwrap();
    assert!(matches!(
        direct_gradient_estimate(&sys, &c, &far, &p, &mut RngStream::new(5, 0)),
        Err(Error::EstimationFailure(_))
    ));
    assert!(ZeroOrderParams::new(0.0, 1, 1).is_err());
    assert!(ZeroOrderParams::new(0.1, 0, 1).is_err());
    assert!(direct_gradient_estimate(&sys, &c, &Matrix::zeros(1, 2), &params, &mut RngStream::new(0, 0)).is_err());
}

#[test]
fn scalar_rollout_bias_within_bound() {
    let (sys, c) = scalar_sys();
    let k = Matrix::zeros(1, 1);
    let c0 = cost(&sys, &c, &k).unwrap();
    let consts = level_constants(&sys, &c, 2.0 * c0).unwrap();
    let v = 0.5 * consts.bounds.h(c0).min(consts.norm_k_star);
    let ell = 50;
    let params = ZeroOrderParams::new(v, ell, 1).unwrap();
    let mut est = DirectEstimator::new(&sys, &c).unwrap();
    let mut rng = RngStream::new(6, 0);
    let reps = 10_000;
    let mut mean = 0.0;
    for _ in 0..reps {
        mean += est.estimate(&k, &params, &mut rng).unwrap().gradient[(0, 0)] / reps as f64;
    }
    let truth = exact_gradient(&sys, &c, &k).unwrap()[(0, 0)];
    let bound = direct_bias_bound(&consts, &sys, &c, &k, v, ell).unwrap();
    assert!((mean - truth).abs() <= bound, "{} > {bound}", (mean - truth).abs());
}

#[test]
fn standard_error_shrinks_as_inverse_root_n() {
    let (sys, c) = scalar_sys();
    let k = Matrix::zeros(1, 1);
    let mut est = DirectEstimator::new(&sys, &c).unwrap();
    let ns = [100usize, 1000, 10_000];
    let reps = 50;
    let mut sds = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let params = ZeroOrderParams::new(0.1, 20, n).unwrap();
        let mut rng = RngStream::new(7, j as u64);
        let gs: Vec<f64> = (0..reps).map(|_| est.estimate(&k, &params, &mut rng).unwrap().gradient[(0, 0)]).collect();
        let m = gs.iter().sum::<f64>() / reps as f64;
        sds.push((gs.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / (reps - 1) as f64).sqrt());
    }
    let slope = loglog_slope(&ns.map(|n| n as f64), &sds);
    assert!((-0.6..=-0.4).contains(&slope), "{slope}");
}

#[test]
fn bias_bound_limits_and_regime() {
    let (sys, c) = scalar_sys();
    let k = Matrix::zeros(1, 1);
    let c0 = cost(&sys, &c, &k).unwrap();
    let consts = level_constants(&sys, &c, 2.0 * c0).unwrap();
    let b = &consts.bounds;
    let v = 0.01;
    assert!((direct_bias_bound_at(b, c0, v, f64::INFINITY) - v * b.h_grad(c0)).abs() < 1e-12);
    let smooth = v * b.h_grad(c0);
    let first = direct_bias_bound_at(b, c0, v, 100.0) - smooth;
    let halved = direct_bias_bound_at(b, c0, v, 200.0) - smooth;
    assert!((first - 2.0 * halved).abs() <= 1e-12 * first);
    assert!(matches!(
        direct_bias_bound(&consts, &sys, &c, &k, 10.0, 100),
        Err(Error::OutOfRegime(_))
    ));
    assert!(direct_second_moment_bound(&consts, &sys, &c, &k, 10.0, 100, 1).is_err());
}

fn phi(b: &LevelBounds, c: f64, v: f64, ell: f64) -> f64 {
    let g = b.b_grad(c);
    let d = direct_bias_bound_at(b, c, v, ell);
    g * g + d * d + g * d
}

#[test]
fn second_moment_bound_limits() {
    let (sys, c) = scalar_sys();
    let b = LevelBounds::new(&sys, &c).unwrap();
    let (c0, v, ell) = (4.0 / 3.0, 0.01, 100.0);
    let limit = direct_second_moment_bound_at(&b, c0, v, ell, f64::INFINITY);
    assert!((limit - phi(&b, c0, v, ell)).abs() <= 1e-12 * limit);
    let var = |v: f64| direct_second_moment_bound_at(&b, c0, v, ell, 10.0) - phi(&b, c0, v, ell);
    assert!(var(v / 2.0) <= 4.0 * var(v) && var(v / 2.0) > var(v));
}

#[test]
fn bound_sequences_under_growing_parameters() {
    let (sys, c) = scalar_sys();
    let b = LevelBounds::new(&sys, &c).unwrap();
    let c0 = 4.0 / 3.0;
    let is: Vec<f64> = (0..=30).map(|j| 10f64 * 1000f64.powf(j as f64 / 30.0)).collect();
    let bias: Vec<f64> = is.iter().map(|&i| direct_bias_bound_at(&b, c0, 0.01 / i.sqrt(), 20.0 * i)).collect();
    let slope = loglog_slope(&is, &bias);
    assert!((slope + 0.5).abs() <= 0.05, "{slope}");

    let moments: Vec<f64> = (1..=10_000)
        .step_by(37)
        .map(|i| {
            let i = i as f64;
            direct_second_moment_bound_at(&b, c0, 0.01 / i.sqrt(), 20.0 * i, 300.0 * i)
        })
        .collect();
    let sup = moments.iter().cloned().fold(0.0, f64::max);
    assert!(sup.is_finite());
    let last = *moments.last().unwrap();
    let mid = moments[moments.len() / 10];
    assert!((last / mid - 1.0).abs() < 0.1, "{mid} → {last}");
}

proptest! {
    #![proptest_config(fixed(200))]

    #[test]
    fn sphere_radius_is_exact((n_u, n_x, v, seed) in (1usize..=4, 1usize..=5, 1e-6f64..10.0, any::<u64>())) {
        let u = sample_sphere(n_u, n_x, v, &mut RngStream::new(seed, 8));
        prop_assert_eq!(u.shape(), (n_u, n_x));
        prop_assert!((u.norm() - v).abs() <= 1e-12 * v);
    }
}
