use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 200;
/// Relative distance to the minimiser at which gradient descent stops.
pub const GD_TOL: f64 = 1e-8;
const GD_MAX_ITERS: usize = 200_000;

/// `0.5 |A x + B z - y|^2 + 0.5 rx |x|^2 + 0.5 rz |z|^2` with `y` drawn
/// around a planted `(x, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub reg_x: f64,
    pub reg_z: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageReport {
    pub kappa_joint: f64,
    pub kappa_1: f64,
    pub kappa_2: f64,
    /// Frobenius norm of `A^T B`.
    pub off_diagonal_norm: f64,
    pub decoupled: bool,
    pub joint_iterations: usize,
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    /// Largest `|e_k| / ((1 - mu/L)^k |e_0|)` over every run and iteration.
    pub worst_bound_ratio: f64,
    pub bound_holds: bool,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

impl QuadraticProblem {
    /// Dense operators whose columns overlap by `coupling` in `[0, 1]`.
    pub fn random(seed: u64, k: usize, n: usize, m: usize, coupling: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = uniform(&mut rng, k, n);
        let mix = uniform(&mut rng, n, m);
        let b = (&a * mix) * (coupling / n as f64) + uniform(&mut rng, k, m) * (1.0 - coupling);
        QuadraticProblem {
            a,
            b,
            reg_x: 1e-2,
            reg_z: 1e-2,
            sigma: 0.01,
        }
    }

    /// Instance `seed` of the standard battery; sizes and coupling cycle with the seed.
    pub fn battery(seed: u64) -> Self {
        let coupling = 0.2 + 0.6 * (seed % 4) as f64 / 3.0;
        Self::random(
            seed,
            30 + (seed % 3) as usize * 10,
            8 + (seed % 5) as usize,
            6,
            coupling,
        )
    }

    /// `A` and `B` act on disjoint measurement rows, so `A^T B` is exactly zero.
    pub fn random_orthogonal(seed: u64, k: usize, n: usize, m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let split = k / 2;
        let mut a = DMatrix::zeros(k, n);
        let mut b = DMatrix::zeros(k, m);
        a.rows_mut(0, split).copy_from(&uniform(&mut rng, split, n));
        b.rows_mut(split, k - split).copy_from(&uniform(&mut rng, k - split, m));
        QuadraticProblem {
            a,
            b,
            reg_x: 1e-2,
            reg_z: 1e-2,
            sigma: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, n, m) = (self.a.nrows(), self.a.ncols(), self.b.ncols());
        if k == 0 || n == 0 || m == 0 || self.b.nrows() != k {
            return Err(Error::Domain("operators need matching non-empty shapes".into()));
        }
        if n + m > MAX_DIM || k > MAX_DIM {
            return Err(Error::Domain(format!("dimensions above {MAX_DIM} are not supported")));
        }
        if !(self.reg_x >= 0.0 && self.reg_z >= 0.0 && self.sigma >= 0.0) {
            return Err(Error::Domain("regularisers and noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let (n, m) = (self.a.ncols(), self.b.ncols());
        let mut h = DMatrix::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n))
            .copy_from(&(self.a.tr_mul(&self.a) + DMatrix::identity(n, n) * self.reg_x));
        h.view_mut((n, n), (m, m))
            .copy_from(&(self.b.tr_mul(&self.b) + DMatrix::identity(m, m) * self.reg_z));
        let off = self.a.tr_mul(&self.b);
        h.view_mut((0, n), (n, m)).copy_from(&off);
        h.view_mut((n, 0), (m, n)).copy_from(&off.transpose());
        h
    }
}

/// `(lambda_min, lambda_max)` of a symmetric matrix.
fn extremes(h: &DMatrix<f64>) -> Result<(f64, f64)> {
    let eig = h
        .clone()
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 1e-12 * hi.abs()) {
        return Err(Error::Domain(format!("hessian is singular (lambda_min = {lo:e})")));
    }
    Ok((lo, hi))
}

struct Descent {
    iterations: usize,
    worst_ratio: f64,
}

/// Plain gradient descent with step `1/L` from zero, checked against the
/// closed-form minimiser at every iteration.
fn descend(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<Descent> {
    let (mu, l) = extremes(h)?;
    let star = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("cholesky factorisation failed".into()))?
        .solve(rhs);
    let rate = 1.0 - mu / l;
    let mut w = DVector::zeros(rhs.len());
    let e0 = star.norm();
    if e0 == 0.0 {
        return Ok(Descent {
            iterations: 0,
            worst_ratio: 0.0,
        });
    }
    let floor = 1e-12 * e0;
    let mut worst: f64 = 0.0;
    for k in 1..=GD_MAX_ITERS {
        let grad = h * &w - rhs;
        w -= grad / l;
        let err = (&w - &star).norm();
        let bound = rate.powi(k as i32) * e0;
        worst = worst.max(err / (bound + floor));
        if err <= GD_TOL * e0 {
            return Ok(Descent {
                iterations: k,
                worst_ratio: worst,
            });
        }
    }
    Err(Error::Numeric(format!(
        "gradient descent did not reach {GD_TOL:e} in {GD_MAX_ITERS} steps"
    )))
}

pub fn two_stage_vs_joint(problem: &QuadraticProblem, seed: u64) -> Result<TwoStageReport> {
    problem.validate()?;
    let (k, n, m) = (problem.a.nrows(), problem.a.ncols(), problem.b.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_true = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let z_true = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let mut noise = |len: usize| DVector::from_fn(len, |_, _| problem.sigma * rng.gen_range(-1.0..1.0));
    let y_static = &problem.a * &x_true + noise(k);
    let y = &problem.a * &x_true + &problem.b * &z_true + noise(k);

    let h = problem.hessian();
    let h1 = h.view((0, 0), (n, n)).into_owned();
    let h2 = h.view((n, n), (m, m)).into_owned();
    let off_diagonal_norm = h.view((0, n), (n, m)).norm();
    let kappa = |mat: &DMatrix<f64>| extremes(mat).map(|(lo, hi)| hi / lo);

    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&problem.a.tr_mul(&y));
    rhs.rows_mut(n, m).copy_from(&problem.b.tr_mul(&y));
    let joint = descend(&h, &rhs)?;

    let stage1 = descend(&h1, &problem.a.tr_mul(&y_static))?;
    let x_hat = h1.clone().cholesky().map(|c| c.solve(&problem.a.tr_mul(&y_static)));
    let x_hat = x_hat.ok_or_else(|| Error::Numeric("cholesky factorisation failed".into()))?;
    let residual = &y - &problem.a * &x_hat;
    let stage2 = descend(&h2, &problem.b.tr_mul(&residual))?;

    let worst = joint.worst_ratio.max(stage1.worst_ratio).max(stage2.worst_ratio);
    Ok(TwoStageReport {
        kappa_joint: kappa(&h)?,
        kappa_1: kappa(&h1)?,
        kappa_2: kappa(&h2)?,
        off_diagonal_norm,
        decoupled: off_diagonal_norm < 1e-12,
        joint_iterations: joint.iterations,
        stage1_iterations: stage1.iterations,
        stage2_iterations: stage2.iterations,
        worst_bound_ratio: worst,
        bound_holds: worst <= 1.0 + 1e-9,
    })
}
