//! Problem instances used by the experiments.

use crate::error::Result;
use crate::lqr::{LinearSystem, LqrCost};
use crate::matops::{solve_dare, Matrix, SymmetricPsdMatrix};
use crate::Gain;

/// A system, its cost and an initial stabilizing gain.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: &'static str,
    pub sys: LinearSystem,
    pub cost: LqrCost,
    pub k0: Gain,
}

/// `x_{t+1} = 0.5 x_t + u_t + w_t`, `q = r = σ_w² = 1`, `k0 = 0`.
pub fn scalar() -> Result<Problem> {
    let one = Matrix::from_element(1, 1, 1.0);
    let sys = LinearSystem::new(
        Matrix::from_element(1, 1, 0.5),
        one.clone(),
        SymmetricPsdMatrix::identity(1),
        SymmetricPsdMatrix::identity(1),
        SymmetricPsdMatrix::identity(1),
    )?;
    Ok(Problem {
        name: "scalar",
        sys,
        cost: LqrCost::new(one.clone(), one)?,
        k0: Matrix::zeros(1, 1),
    })
}

pub const BENCHMARK3_DEFAULT_SIGMA_W: f64 = 1e-4;

pub fn benchmark3_a() -> Matrix {
    Matrix::from_row_slice(3, 3, &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01])
}

/// Three coupled, slightly unstable modes with fully actuated input.
/// `k0` is the optimal gain for the weights `(50Q, R)`.
pub fn benchmark3(sigma_w: f64) -> Result<Problem> {
    let a = benchmark3_a();
    let b = Matrix::identity(3, 3);
    let q = Matrix::identity(3, 3) * 0.001;
    let r = Matrix::identity(3, 3);
    let sys = LinearSystem::new(
        a.clone(),
        b.clone(),
        SymmetricPsdMatrix::scaled_identity(3, sigma_w)?,
        SymmetricPsdMatrix::scaled_identity(3, 0.1)?,
        SymmetricPsdMatrix::identity(3),
    )?;
    let k0 = solve_dare(&a, &b, &(&q * 50.0), &r)?.k;
    Ok(Problem {
        name: "benchmark3",
        sys,
        cost: LqrCost::new(q, r)?,
        k0,
    })
}

pub fn boeing747_a() -> Matrix {
    Matrix::from_row_slice(
        5,
        5,
        &[
            1.0, -1.13, -0.65, -0.807, 1.59, //
            0.0, 0.77, 0.32, -0.98, -2.97, //
            0.0, 0.12, 0.02, 0.0, -0.36, //
            0.0, 0.01, 0.01, -0.03, -0.04, //
            0.0, 0.14, -0.09, 0.29, 0.76,
        ],
    )
}

pub fn boeing747_b() -> Matrix {
    Matrix::from_row_slice(
        5,
        4,
        &[
            89.20, -50.17, 1.13, -19.35, //
            5.22, 6.36, 0.23, -0.32, //
            -9.47, 5.93, -0.12, 0.99, //
            -0.32, 0.32, -0.01, -0.01, //
            -4.53, 3.21, -0.14, 0.09,
        ],
    )
}

/// Linearised longitudinal Boeing 747 dynamics, `Q = R = I`, `k0` optimal for
/// `(40Q, R)`. The dither is `N(0, I₄)` (one entry per input).
pub fn boeing747() -> Result<Problem> {
    let a = boeing747_a();
    let b = boeing747_b();
    let q = Matrix::identity(5, 5);
    let r = Matrix::identity(4, 4);
    let sys = LinearSystem::new(
        a.clone(),
        b.clone(),
        SymmetricPsdMatrix::scaled_identity(5, 1e-3)?,
        SymmetricPsdMatrix::scaled_identity(5, 1e-6)?,
        SymmetricPsdMatrix::identity(4),
    )?;
    let k0 = solve_dare(&a, &b, &(&q * 40.0), &r)?.k;
    Ok(Problem {
        name: "boeing747",
        sys,
        cost: LqrCost::new(q, r)?,
        k0,
    })
}
