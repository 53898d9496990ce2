use nalgebra::{DMatrix, DVector};
use tolcone_core::{ObjectivePair, SeededRng};

use crate::{Result, ToyError};

/// `L_i(θ) = ½ (θ − c_i)ᵀ A_i (θ − c_i)` for `i ∈ {e, p}`, with `A_i`
/// symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticPair {
    c_e: DVector<f64>,
    c_p: DVector<f64>,
    a_e: DMatrix<f64>,
    a_p: DMatrix<f64>,
}

fn check_spd(a: &DMatrix<f64>, dim: usize) -> Result<()> {
    if a.nrows() != dim || a.ncols() != dim {
        return Err(ToyError::DimensionMismatch {
            expected: dim,
            found: a.nrows(),
        });
    }
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * (1.0 + a.amax()) {
        return Err(ToyError::NotSymmetric(asym));
    }
    let min = a.clone().symmetric_eigenvalues().min();
    if !(min > 0.0) {
        return Err(ToyError::NotPositiveDefinite(min));
    }
    Ok(())
}

impl QuadraticPair {
    pub fn new(c_e: DVector<f64>, c_p: DVector<f64>, a_e: DMatrix<f64>, a_p: DMatrix<f64>) -> Result<Self> {
        let dim = c_e.len();
        if c_p.len() != dim {
            return Err(ToyError::DimensionMismatch {
                expected: dim,
                found: c_p.len(),
            });
        }
        check_spd(&a_e, dim)?;
        check_spd(&a_p, dim)?;
        Ok(Self { c_e, c_p, a_e, a_p })
    }

    /// `A_e = μ_e I`, `A_p = μ_p I`, centers at `±separation/2` along the
    /// first axis.
    pub fn isotropic(dim: usize, mu_e: f64, mu_p: f64, separation: f64) -> Result<Self> {
        let mut c_e = DVector::zeros(dim);
        let mut c_p = DVector::zeros(dim);
        c_e[0] = separation / 2.0;
        c_p[0] = -separation / 2.0;
        Self::new(
            c_e,
            c_p,
            DMatrix::identity(dim, dim) * mu_e,
            DMatrix::identity(dim, dim) * mu_p,
        )
    }

    /// Random rotations with eigenvalues in `[1, condition]` and centers a
    /// distance `separation` apart, so the two minima pull in opposing
    /// directions.
    pub fn random_conflicting(dim: usize, condition: f64, separation: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(condition >= 1.0) {
            return Err(ToyError::Config(format!(
                "condition number must be >= 1, got {condition}"
            )));
        }
        let spd = |rng: &mut SeededRng| {
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.normal());
            let q = g.qr().q();
            let eig = DVector::from_fn(dim, |i, _| {
                if dim == 1 {
                    1.0
                } else {
                    1.0 + (condition - 1.0) * i as f64 / (dim - 1) as f64
                }
            });
            let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
            (&a + a.transpose()) * 0.5
        };
        let a_e = spd(rng);
        let a_p = spd(rng);
        let dir = DVector::from_fn(dim, |_, _| rng.normal());
        let dir = dir.normalize();
        let c_e = &dir * (separation / 2.0);
        let c_p = &dir * (-separation / 2.0);
        Self::new(c_e, c_p, a_e, a_p)
    }

    pub fn center_e(&self) -> &DVector<f64> {
        &self.c_e
    }

    pub fn center_p(&self) -> &DVector<f64> {
        &self.c_p
    }

    /// Largest eigenvalue over both curvatures (the smoothness constant).
    pub fn smoothness(&self) -> f64 {
        let e = self.a_e.clone().symmetric_eigenvalues().max();
        let p = self.a_p.clone().symmetric_eigenvalues().max();
        e.max(p)
    }

    /// Minimizer and minimum of `C = L_e + λ L_p`, from
    /// `(A_e + λA_p) θ = A_e c_e + λ A_p c_p`.
    pub fn composite_minimum(&self, lambda: f64) -> Result<(Vec<f64>, f64)> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ToyError::Config(format!("composite weight must be >= 0, got {lambda}")));
        }
        let h = &self.a_e + &self.a_p * lambda;
        let rhs = &self.a_e * &self.c_e + &self.a_p * &self.c_p * lambda;
        let chol = h.cholesky().ok_or(ToyError::NotPositiveDefinite(f64::NAN))?;
        let theta = chol.solve(&rhs);
        let t = theta.as_slice();
        let value = self.loss_e(t) + lambda * self.loss_p(t);
        Ok((t.to_vec(), value))
    }

    fn eval(a: &DMatrix<f64>, c: &DVector<f64>, theta: &[f64]) -> f64 {
        let r = DVector::from_column_slice(theta) - c;
        0.5 * r.dot(&(a * &r))
    }

    fn grad(a: &DMatrix<f64>, c: &DVector<f64>, theta: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(theta) - c;
        (a * r).as_slice().to_vec()
    }
}

impl ObjectivePair<f64> for QuadraticPair {
    fn dim(&self) -> usize {
        self.c_e.len()
    }

    fn loss_e(&self, theta: &[f64]) -> f64 {
        Self::eval(&self.a_e, &self.c_e, theta)
    }

    fn loss_p(&self, theta: &[f64]) -> f64 {
        Self::eval(&self.a_p, &self.c_p, theta)
    }

    fn grad_e(&self, theta: &[f64]) -> Vec<f64> {
        Self::grad(&self.a_e, &self.c_e, theta)
    }

    fn grad_p(&self, theta: &[f64]) -> Vec<f64> {
        Self::grad(&self.a_p, &self.c_p, theta)
    }
}
