//! Dense matrix kernels and the structured solvers used throughout the crate:
//! spectral radius, the two discrete Lyapunov equations and the discrete
//! algebraic Riccati equation.
//!
//! Matrices are `nalgebra` dynamic matrices. Everything here is a pure
//! function of its inputs.

use std::ops::Deref;

use nalgebra::{linalg::Schur, linalg::SymmetricEigen, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest state dimension solved through the vectorised (Kronecker) system.
pub const KRONECKER_MAX_DIM: usize = 32;

const EIGEN_MAX_SWEEPS: usize = 10_000;
const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;

/// Largest absolute entry, `max |m_ij|`.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let tol = rel_tol * (1.0 + max_abs(m));
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Induced 2-norm (largest singular value).
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    check_square(m, "symmetric_eigenvalues")?;
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::NonConvergence {
            what: "symmetric eigensolver",
            iterations: EIGEN_MAX_SWEEPS,
            residual: f64::NAN,
        },
    )?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Spectral radius `max |λ_i(M)|` over the complex spectrum.
///
/// Symmetric inputs go through the symmetric eigensolver, everything else
/// through a real Schur decomposition.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    check_square(m, "spectral_radius")?;
    if !all_finite(m) {
        return Err(Error::Numeric("spectral_radius: non-finite entry".into()));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    if is_symmetric(m, 1e-14) {
        let values = symmetric_eigenvalues(m)?;
        return Ok(values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::NonConvergence {
            what: "Schur eigenvalue iteration",
            iterations: EIGEN_MAX_SWEEPS,
            residual: f64::NAN,
        },
    )?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// A symmetric positive semidefinite matrix (covariances, weights, value
/// matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPsdMatrix(Matrix);

impl SymmetricPsdMatrix {
    /// Validates symmetry and semidefiniteness; the stored matrix is the
    /// symmetrised input.
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m, "SymmetricPsdMatrix")?;
        if !all_finite(&m) {
            return Err(Error::NotPsd("non-finite entry".into()));
        }
        if !is_symmetric(&m, 1e-10) {
            return Err(Error::NotPsd("matrix is not symmetric".into()));
        }
        let m = symmetrize(&m);
        let values = symmetric_eigenvalues(&m)?;
        if let (Some(&lo), Some(&hi)) = (values.first(), values.last()) {
            if lo < -1e-10 * (1.0 + hi.max(0.0)) {
                return Err(Error::NotPsd(format!("negative eigenvalue {lo:e}")));
            }
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is PSD by construction (for example a Lyapunov
    /// solution with PSD data). Only symmetrises.
    pub(crate) fn from_trusted(m: Matrix) -> Self {
        Self(symmetrize(&m))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::NotPsd(format!("scale {scale} must be nonnegative")));
        }
        Ok(Self(Matrix::identity(n, n) * scale))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        // The constructor already ran the eigensolver successfully once.
        min_eigenvalue(&self.0).unwrap_or(f64::NAN)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for SymmetricPsdMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Solves `P = Fᵀ P F + Y` for `P`.
///
/// Requires `ρ(F) < 1`.
pub fn solve_lyapunov_obs(f: &Matrix, y: &Matrix) -> Result<SymmetricPsdMatrix> {
    check_lyapunov_args(f, y)?;
    let radius = spectral_radius(f)?;
    if radius >= 1.0 - crate::STABILITY_MARGIN {
        return Err(Error::Unstable { radius });
    }
    lyapunov_obs_stable(f, y).map(SymmetricPsdMatrix::from_trusted)
}

/// Solves `Σ = F Σ Fᵀ + Y` for `Σ`.
///
/// Requires `ρ(F) < 1`. Identical to [`solve_lyapunov_obs`] applied to `Fᵀ`.
pub fn solve_lyapunov_ctrl(f: &Matrix, y: &Matrix) -> Result<SymmetricPsdMatrix> {
    solve_lyapunov_obs(&f.transpose(), y)
}

fn check_lyapunov_args(f: &Matrix, y: &Matrix) -> Result<()> {
    check_square(f, "Lyapunov solve (F)")?;
    check_square(y, "Lyapunov solve (Y)")?;
    if f.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "Lyapunov solve: F is {}x{}, Y is {}x{}",
            f.nrows(),
            f.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if !all_finite(f) || !all_finite(y) {
        return Err(Error::Numeric("Lyapunov solve: non-finite input".into()));
    }
    Ok(())
}

#[inline]
fn sym_index(i: usize, j: usize, n: usize) -> usize {
    // Packed upper triangle, row by row: (0,0) (0,1) .. (0,n-1) (1,1) ..
    debug_assert!(i <= j);
    i * n - i * (i.saturating_sub(1)) / 2 - if i > 0 { i } else { 0 } + j
}

/// Solves `P = Fᵀ P F + Y` without re-checking stability. The caller must know
/// that `ρ(F) < 1`; the result is the symmetrised solution.
pub(crate) fn lyapunov_obs_stable(f: &Matrix, y: &Matrix) -> Result<Matrix> {
    let n = f.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if n > KRONECKER_MAX_DIM {
        return lyapunov_obs_doubling(f, y);
    }
    let y = symmetrize(y);
    let m = n * (n + 1) / 2;
    // Unknowns are the upper-triangular entries of P; equation (i, j) is
    // P_ij - sum_{k,l} F_ki P_kl F_lj = Y_ij.
    let mut sys = Matrix::zeros(m, m);
    let mut rhs = Vector::zeros(m);
    for i in 0..n {
        for j in i..n {
            let e = sym_index(i, j, n);
            rhs[e] = y[(i, j)];
            sys[(e, e)] += 1.0;
            for k in 0..n {
                let fki = f[(k, i)];
                let fkj = f[(k, j)];
                sys[(e, sym_index(k, k, n))] -= fki * fkj;
                for l in (k + 1)..n {
                    let coef = fki * f[(l, j)] + f[(l, i)] * fkj;
                    sys[(e, sym_index(k, l, n))] -= coef;
                }
            }
        }
    }
    let lu = sys.clone().lu();
    let mut sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("Lyapunov system is singular".into()))?;
    let unpack = |sol: &Vector| {
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = sol[sym_index(i, j, n)];
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        p
    };
    let mut p = unpack(&sol);
    // Iterative refinement on the vectorised system when the residual of the
    // matrix equation is above tolerance.
    for _ in 0..3 {
        let resid = &p - f.transpose() * &p * f - &y;
        let scale = LYAPUNOV_RESIDUAL_TOL * (1.0 + max_abs(&p));
        if !all_finite(&p) {
            return Err(Error::Numeric("Lyapunov solution is not finite".into()));
        }
        if max_abs(&resid) <= scale {
            return Ok(p);
        }
        let r = &rhs - &sys * &sol;
        let delta = lu
            .solve(&r)
            .ok_or_else(|| Error::Numeric("Lyapunov system is singular".into()))?;
        sol += delta;
        p = unpack(&sol);
    }
    let resid = &p - f.transpose() * &p * f - &y;
    let r = max_abs(&resid);
    if r <= LYAPUNOV_RESIDUAL_TOL * (1.0 + max_abs(&p)) {
        Ok(p)
    } else {
        Err(Error::NonConvergence {
            what: "Lyapunov refinement",
            iterations: 3,
            residual: r,
        })
    }
}

/// Squared fixed-point (Smith doubling) iteration for large dimensions:
/// `P ← P + Gᵀ P G`, `G ← G²`, starting from `P = Y`, `G = F`.
fn lyapunov_obs_doubling(f: &Matrix, y: &Matrix) -> Result<Matrix> {
    let mut p = symmetrize(y);
    let mut g = f.clone();
    for it in 0..200 {
        let inc = g.transpose() * &p * &g;
        let inc_size = max_abs(&inc);
        p += inc;
        if inc_size <= 1e-16 * (1.0 + max_abs(&p)) {
            return Ok(symmetrize(&p));
        }
        g = &g * &g;
        if !all_finite(&p) {
            return Err(Error::Numeric(format!("doubling iteration overflowed at {it}")));
        }
    }
    Err(Error::NonConvergence {
        what: "Lyapunov doubling iteration",
        iterations: 200,
        residual: f64::NAN,
    })
}

/// Options for [`solve_dare`].
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: SymmetricPsdMatrix,
    /// Optimal gain for the policy `u = K x`.
    pub k: Matrix,
    pub iterations: usize,
    pub residual: f64,
}

fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("R + BᵀPB is not positive definite".into()))?;
    let bt_p_a = &bt_p * a;
    let next = q + a.transpose() * p * a - bt_p_a.transpose() * chol.solve(&bt_p_a);
    Ok(symmetrize(&next))
}

/// Optimal gain `K* = −(R + BᵀPB)⁻¹BᵀPA` for a given value matrix.
pub fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("R + BᵀPB is not positive definite".into()))?;
    Ok(-chol.solve(&(&bt_p * a)))
}

/// Solves the DARE by iterating the Riccati map from `P₀ = Q`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    solve_dare_with(a, b, q, r, DareOptions::default())
}

pub fn solve_dare_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    opts: DareOptions,
) -> Result<DareSolution> {
    check_square(a, "solve_dare (A)")?;
    check_square(q, "solve_dare (Q)")?;
    check_square(r, "solve_dare (R)")?;
    let n = a.nrows();
    if b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
        return Err(Error::Dimension(format!(
            "solve_dare: A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    let mut p = symmetrize(q);
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = riccati_map(a, b, q, r, &p)?;
        if !all_finite(&next) {
            return Err(Error::NonConvergence {
                what: "Riccati iteration",
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        change = max_abs(&(&next - &p));
        p = next;
        if change <= opts.tol * (1.0 + max_abs(&p)) {
            let residual = max_abs(&(riccati_map(a, b, q, r, &p)? - &p));
            let k = riccati_gain(a, b, r, &p)?;
            return Ok(DareSolution {
                p: SymmetricPsdMatrix::from_trusted(p),
                k,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "Riccati iteration",
        iterations: opts.max_iter,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(values))
    }

    #[test]
    fn packed_index_is_a_bijection() {
        for n in 1..7 {
            let mut seen = vec![false; n * (n + 1) / 2];
            for i in 0..n {
                for j in i..n {
                    let idx = sym_index(i, j, n);
                    assert!(!seen[idx]);
                    seen[idx] = true;
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        let d = diag(&[0.5, -0.9]);
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-15);
        // Rotation by 90 degrees scaled by 0.7: complex pair of modulus 0.7.
        let rot = Matrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            spectral_radius(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn lyapunov_zero_dynamics_returns_data() {
        let y = diag(&[1.0, 2.0, 3.0]);
        let p = solve_lyapunov_obs(&Matrix::zeros(3, 3), &y).unwrap();
        assert_eq!(p.as_matrix(), &y);
        let s = solve_lyapunov_ctrl(&Matrix::zeros(3, 3), &y).unwrap();
        assert_eq!(s.as_matrix(), &y);
    }

    #[test]
    fn lyapunov_scalar_closed_form() {
        let f = Matrix::from_element(1, 1, 0.5);
        let y = Matrix::from_element(1, 1, 1.0);
        let p = solve_lyapunov_obs(&f, &y).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        let s = solve_lyapunov_ctrl(&f, &y).unwrap();
        assert!((s[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable_and_mismatched() {
        let f = Matrix::from_element(1, 1, 1.01);
        let y = Matrix::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_lyapunov_obs(&f, &y),
            Err(Error::Unstable { .. })
        ));
        assert!(matches!(
            solve_lyapunov_obs(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn doubling_matches_kronecker() {
        let f = Matrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, -0.1, 0.3, 0.4, 0.0, 0.2, -0.6]);
        let y = diag(&[1.0, 0.5, 2.0]);
        let direct = lyapunov_obs_stable(&f, &y).unwrap();
        let doubled = lyapunov_obs_doubling(&f, &y).unwrap();
        assert!(max_abs(&(direct - doubled)) < 1e-12);
    }

    #[test]
    fn dare_zero_dynamics() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::identity(2, 1);
        let q = diag(&[1.0, 2.0]);
        let r = Matrix::identity(1, 1);
        let sol = solve_dare(&a, &b, &q, &r).unwrap();
        assert!(max_abs(&(sol.p.as_matrix() - &q)) < 1e-15);
        assert!(max_abs(&sol.k) < 1e-15);
    }

    #[test]
    fn dare_scalar_root() {
        let one = Matrix::from_element(1, 1, 1.0);
        let a = Matrix::from_element(1, 1, 0.5);
        let sol = solve_dare(&a, &one, &one, &one).unwrap();
        // P² − 0.25 P − 1 = 0
        let p_exact = (0.25 + (0.0625_f64 + 4.0).sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - p_exact).abs() < 1e-12);
        assert!((sol.k[(0, 0)] + 0.5 * p_exact / (1.0 + p_exact)).abs() < 1e-12);
    }

    #[test]
    fn psd_validation() {
        assert!(SymmetricPsdMatrix::new(diag(&[1.0, 0.0])).is_ok());
        assert!(SymmetricPsdMatrix::new(diag(&[1.0, -0.1])).is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(SymmetricPsdMatrix::new(asym).is_err());
    }
}
