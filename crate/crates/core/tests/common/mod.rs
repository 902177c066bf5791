#![allow(dead_code)]

use lqrpg_core::lqr::{is_stabilizing, LinearSystem};
use lqrpg_core::presets::{self, Problem};
use lqrpg_core::sim::RngStream;
use lqrpg_core::{Gain, Matrix};

pub fn all_presets() -> Vec<Problem> {
    vec![
        presets::scalar().unwrap(),
        presets::benchmark3(presets::BENCHMARK3_DEFAULT_SIGMA_W).unwrap(),
        presets::boeing747().unwrap(),
    ]
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Random matrix with spectral radius at most `rho` (Frobenius norm bounds it).
pub fn random_contraction(n: usize, rho: f64, rng: &mut RngStream) -> Matrix {
    let g = gaussian(n, n, rng);
    let norm = g.norm();
    g * (rho / norm)
}

pub fn random_psd(n: usize, rng: &mut RngStream) -> Matrix {
    let g = gaussian(n, n + 1, rng);
    &g * g.transpose()
}

/// `K0 + D` with `D` a random direction; the step is halved until the gain
/// stabilizes.
pub fn random_stabilizing(sys: &LinearSystem, k0: &Gain, scale: f64, rng: &mut RngStream) -> Gain {
    let d = gaussian(k0.nrows(), k0.ncols(), rng);
    let d = &d * (scale / d.norm());
    let mut t = 1.0;
    loop {
        let k = k0 + &d * t;
        if is_stabilizing(sys, &k).unwrap() {
            return k;
        }
        t *= 0.5;
    }
}

/// Naive fixed-point iteration `P ← Fᵀ P F + Y`.
pub fn lyapunov_fixed_point(f: &Matrix, y: &Matrix) -> Matrix {
    let mut p = y.clone();
    for _ in 0..1_000_000 {
        let next = f.transpose() * &p * f + y;
        let diff = (&next - &p).abs().max();
        p = next;
        if diff <= 1e-15 * (1.0 + p.abs().max()) {
            break;
        }
    }
    p
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).abs().max()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// A random gain in `S(j0)`: a step from `k0` in a random direction of
/// Frobenius length `scale`, halved until the cost drops to `j0`.
pub fn random_in_level_set(
    sys: &LinearSystem,
    cost: &lqrpg_core::lqr::LqrCost,
    k0: &Gain,
    scale: f64,
    j0: f64,
    rng: &mut RngStream,
) -> Gain {
    let d = gaussian(k0.nrows(), k0.ncols(), rng);
    let d = &d * (scale / d.norm());
    let mut t = 1.0;
    loop {
        let k = k0 + &d * t;
        if lqrpg_core::lqr::in_level_set(sys, cost, &k, j0) {
            return k;
        }
        t *= 0.5;
    }
}

/// Five-point central differences of the cost at step `1e-6·(1 + ‖K‖)`.
pub fn fd_gradient(sys: &LinearSystem, cost: &lqrpg_core::lqr::LqrCost, k: &Gain) -> Matrix {
    let h = 1e-6 * (1.0 + k.norm());
    let at = |i: usize, j: usize, t: f64| {
        let mut kk = k.clone();
        kk[(i, j)] += t;
        lqrpg_core::lqr::cost(sys, cost, &kk).unwrap()
    };
    Matrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        (8.0 * (at(i, j, h) - at(i, j, -h)) - (at(i, j, 2.0 * h) - at(i, j, -2.0 * h))) / (12.0 * h)
    })
}

/// Spread of the random gains drawn around a preset's initial gain.
pub fn sampling_scale(k0: &Gain) -> f64 {
    0.5 * (1.0 + k0.norm())
}

/// Proptest configuration with a fixed seed so every run checks the same cases.
pub fn fixed(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5EED_1A2B),
        failure_persistence: None,
        ..Default::default()
    }
}
