//! Seeded simulation of `x_{t+1} = A x_t + B u_t + w_t`.

use nalgebra::linalg::SymmetricEigen;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lqr::{LinearSystem, LqrCost};
use crate::matops::{Matrix, SymmetricPsdMatrix, Vector};
use crate::Gain;

/// States with an entry above this magnitude end the trajectory.
pub const DIVERGENCE_THRESHOLD: f64 = 1e150;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent child stream, a pure function of `(seed, stream_id, label)`.
    pub fn child(&self, label: u64) -> Self {
        let seed = splitmix(splitmix(self.seed ^ 0xA5A5_5A5A_C3C3_3C3C) ^ label);
        Self::new(seed, self.stream_id)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draws `N(0, Σ)` as `L z` with `L Lᵀ = Σ`, `L = V diag(√λ)`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    dim: usize,
    /// Row-major factor; `None` when `Σ` is diagonal.
    factor: Option<Vec<f64>>,
    scales: Vec<f64>,
    zero: bool,
}

impl GaussianSampler {
    pub fn new(cov: &SymmetricPsdMatrix) -> Result<Self> {
        let m = cov.as_matrix();
        let n = m.nrows();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        if diagonal {
            let mut scales = Vec::with_capacity(n);
            for i in 0..n {
                let d = m[(i, i)];
                if d < 0.0 {
                    return Err(Error::NotPsd(format!("negative variance {d}")));
                }
                scales.push(d.sqrt());
            }
            let zero = scales.iter().all(|s| *s == 0.0);
            return Ok(Self {
                dim: n,
                factor: None,
                scales,
                zero,
            });
        }
        let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numeric("covariance factorisation did not converge".into()))?;
        let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
        let mut factor = vec![0.0; n * n];
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -1e-10 * (1.0 + top) {
                return Err(Error::NotPsd(format!("negative eigenvalue {lam:e}")));
            }
            let s = lam.max(0.0).sqrt();
            for i in 0..n {
                factor[i * n + j] = eig.eigenvectors[(i, j)] * s;
            }
        }
        let zero = top <= 0.0;
        Ok(Self {
            dim: n,
            factor: Some(factor),
            scales: Vec::new(),
            zero,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Writes one draw into `out`; `scratch` must have length `dim`.
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64], scratch: &mut [f64]) {
        if self.zero {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        match &self.factor {
            None => {
                for (o, s) in out.iter_mut().zip(&self.scales) {
                    *o = s * rng.normal();
                }
            }
            Some(f) => {
                rng.fill_normal(scratch);
                let n = self.dim;
                for i in 0..n {
                    let row = &f[i * n..(i + 1) * n];
                    out[i] = row.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vector {
        let mut out = vec![0.0; self.dim];
        let mut scratch = vec![0.0; self.dim];
        self.sample_into(rng, &mut out, &mut scratch);
        Vector::from_vec(out)
    }
}

/// One draw from `N(0, cov)`.
pub fn gaussian_vector(cov: &SymmetricPsdMatrix, rng: &mut RngStream) -> Result<Vector> {
    Ok(GaussianSampler::new(cov)?.sample(rng))
}

/// States `x_0 … x_T` and inputs `u_0 … u_{T−1}`. A diverged trajectory is
/// cut at the last state below [`DIVERGENCE_THRESHOLD`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn exceeds(x: &[f64]) -> bool {
    x.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD))
}

/// Simulates `length` steps of `u_t = K x_t (+ e_t)` from `x_0 ~ N(0, Σ_0)`.
pub fn rollout_closed_loop(
    sys: &LinearSystem,
    k: &Gain,
    length: usize,
    dither: Option<&SymmetricPsdMatrix>,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if length == 0 {
        return Err(Error::InvalidArgument("rollout length must be positive".into()));
    }
    if k.nrows() != sys.n_u() || k.ncols() != sys.n_x() {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            sys.n_u(),
            sys.n_x()
        )));
    }
    let x0 = GaussianSampler::new(&sys.sigma_0)?;
    let w = GaussianSampler::new(&sys.sigma_w)?;
    let e = dither.map(GaussianSampler::new).transpose()?;
    if let Some(e) = &e {
        if e.dim() != sys.n_u() {
            return Err(Error::Dimension("dither covariance has the wrong size".into()));
        }
    }
    let mut x = x0.sample(rng);
    let mut states = Vec::with_capacity(length + 1);
    let mut inputs = Vec::with_capacity(length);
    let mut diverged = exceeds(x.as_slice());
    if !diverged {
        states.push(x.clone());
    }
    for _ in 0..length {
        if diverged {
            break;
        }
        let mut u = k * &x;
        if let Some(e) = &e {
            u += e.sample(rng);
        }
        let next = &sys.a * &x + &sys.b * &u + w.sample(rng);
        inputs.push(u);
        if exceeds(next.as_slice()) {
            diverged = true;
            inputs.pop();
            break;
        }
        states.push(next.clone());
        x = next;
    }
    Ok(Trajectory {
        states,
        inputs,
        diverged,
    })
}

/// `(1/ℓ) Σ_{t<ℓ} x_tᵀ (Q + KᵀRK) x_t` over the `ℓ` steps of the trajectory.
pub fn empirical_cost(traj: &Trajectory, cost: &LqrCost, k: &Gain) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let w = cost.stage_weight(k);
    let total: f64 = traj.states[..traj.len()]
        .iter()
        .map(|x| (x.transpose() * &w * x)[(0, 0)])
        .sum();
    Ok(total / traj.len() as f64)
}

/// Allocation-free rollout evaluator for the zeroth-order estimator. Holds the
/// system in row-major form together with the noise samplers.
#[derive(Debug, Clone)]
pub struct RolloutKernel {
    n_x: usize,
    n_u: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    x0: GaussianSampler,
    w: GaussianSampler,
}

/// Reusable buffers for [`RolloutKernel::cost`].
#[derive(Debug, Clone)]
pub struct RolloutScratch {
    f: Vec<f64>,
    weight: Vec<f64>,
    x: Vec<f64>,
    next: Vec<f64>,
    noise: Vec<f64>,
    z: Vec<f64>,
}

fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

impl RolloutKernel {
    pub fn new(sys: &LinearSystem, cost: &LqrCost) -> Result<Self> {
        Ok(Self {
            n_x: sys.n_x(),
            n_u: sys.n_u(),
            a: row_major(&sys.a),
            b: row_major(&sys.b),
            q: row_major(&cost.q),
            r: row_major(&cost.r),
            x0: GaussianSampler::new(&sys.sigma_0)?,
            w: GaussianSampler::new(&sys.sigma_w)?,
        })
    }

    pub fn scratch(&self) -> RolloutScratch {
        let n = self.n_x;
        RolloutScratch {
            f: vec![0.0; n * n],
            weight: vec![0.0; n * n],
            x: vec![0.0; n],
            next: vec![0.0; n],
            noise: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    /// Empirical cost of an `ℓ`-step rollout of `u = Kx` (row-major `k`), and
    /// whether it overflowed. An overflowing rollout returns `f64::INFINITY`.
    pub fn cost(&self, k: &[f64], ell: usize, rng: &mut RngStream, s: &mut RolloutScratch) -> (f64, bool) {
        let (n, m) = (self.n_x, self.n_u);
        // F = A + B K and W = Q + Kᵀ R K
        for i in 0..n {
            for j in 0..n {
                let mut acc = self.a[i * n + j];
                for l in 0..m {
                    acc += self.b[i * m + l] * k[l * n + j];
                }
                s.f[i * n + j] = acc;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = self.q[i * n + j];
                for l in 0..m {
                    let mut rk = 0.0;
                    for p in 0..m {
                        rk += self.r[l * m + p] * k[p * n + j];
                    }
                    acc += k[l * n + i] * rk;
                }
                s.weight[i * n + j] = acc;
            }
        }
        self.x0.sample_into(rng, &mut s.x, &mut s.z);
        let mut total = 0.0;
        for _ in 0..ell {
            let mut stage = 0.0;
            for i in 0..n {
                let row = &s.weight[i * n..(i + 1) * n];
                let wx: f64 = row.iter().zip(s.x.iter()).map(|(a, b)| a * b).sum();
                stage += s.x[i] * wx;
            }
            total += stage;
            self.w.sample_into(rng, &mut s.noise, &mut s.z);
            for i in 0..n {
                let row = &s.f[i * n..(i + 1) * n];
                s.next[i] = row.iter().zip(s.x.iter()).map(|(a, b)| a * b).sum::<f64>() + s.noise[i];
            }
            std::mem::swap(&mut s.x, &mut s.next);
            if exceeds(&s.x) {
                return (f64::INFINITY, true);
            }
        }
        (total / ell as f64, false)
    }
}

/// Open-loop plant used by the indirect experiments: keeps the current state
/// and applies one (possibly dithered) feedback step at a time.
#[derive(Debug, Clone)]
pub struct Plant {
    a: Matrix,
    b: Matrix,
    w: GaussianSampler,
    e: GaussianSampler,
    pub x: Vector,
    diverged: bool,
}

/// One identification sample: regressor `d = [x; u]` and successor state.
#[derive(Debug, Clone)]
pub struct Transition {
    pub d: Vector,
    pub x_next: Vector,
}

impl Plant {
    /// Starts from `x ~ N(0, Σ_0)`.
    pub fn new(sys: &LinearSystem, rng: &mut RngStream) -> Result<Self> {
        let x0 = GaussianSampler::new(&sys.sigma_0)?;
        Ok(Self {
            a: sys.a.clone(),
            b: sys.b.clone(),
            w: GaussianSampler::new(&sys.sigma_w)?,
            e: GaussianSampler::new(&sys.sigma_e)?,
            x: x0.sample(rng),
            diverged: false,
        })
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// Applies `u = K x + e` and advances the state.
    pub fn step(&mut self, k: &Gain, rng: &mut RngStream) -> Transition {
        let u = k * &self.x + self.e.sample(rng);
        let next = &self.a * &self.x + &self.b * &u + self.w.sample(rng);
        let n = self.x.len();
        let mut d = Vector::zeros(n + u.len());
        d.rows_mut(0, n).copy_from(&self.x);
        d.rows_mut(n, u.len()).copy_from(&u);
        if exceeds(next.as_slice()) {
            self.diverged = true;
        }
        self.x = next.clone();
        Transition { d, x_next: next }
    }
}
