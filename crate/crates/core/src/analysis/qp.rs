//! Numeric solution of the per-step surgery problem, independent of the
//! closed form. Slow; used only to test the closed form.

use crate::vector::{add_scaled, dot, max_abs_diff, norm, norm_sq, GradientPair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Primal maximizer from projected gradient ascent.
    pub direction: Vec<f64>,
    /// Dual minimizer over `λ ≥ 0` from bisection.
    pub lambda: f64,
    pub primal_iterations: usize,
}

const MAX_ITERS: usize = 100_000;

/// Solves `max_d g_e·d − ½‖d‖² s.t. g_p·d ≥ −ε` by projected gradient
/// ascent (step 0.5, projection onto the halfspace), and the dual
/// `min_{λ≥0} ½‖g_e + λg_p‖² + λε` by bracketing and bisecting the sign of
/// its derivative. The two answers are cross-checked through
/// `d = g_e + λg_p`; disagreement or a blown iteration cap is reported as
/// [`Error::OracleNonConvergence`].
pub fn qp_oracle(grads: &GradientPair<f64>, epsilon: f64) -> Result<QpSolution> {
    let (ge, gp) = (grads.e(), grads.p());
    let pp = norm_sq(gp);
    let project = |d: Vec<f64>| -> Vec<f64> {
        let s = dot(gp, &d);
        if s < -epsilon && pp > 0.0 {
            add_scaled(&d, (-epsilon - s) / pp, gp)
        } else {
            d
        }
    };

    let tol = 1e-14 * (1.0 + norm(ge));
    let mut d = project(vec![0.0; ge.len()]);
    let mut iters = 0;
    loop {
        let step: Vec<f64> = d.iter().zip(ge).map(|(&x, &g)| x + 0.5 * (g - x)).collect();
        let next = project(step);
        iters += 1;
        let moved = max_abs_diff(&next, &d);
        d = next;
        if moved <= tol {
            break;
        }
        if iters >= MAX_ITERS {
            return Err(Error::OracleNonConvergence(format!(
                "projected ascent still moving by {moved:e} after {iters} iterations"
            )));
        }
    }

    // derivative of the dual, evaluated from the vectors
    let slope = |l: f64| dot(gp, &add_scaled(ge, l, gp)) + epsilon;
    let lambda = if slope(0.0) >= 0.0 {
        0.0
    } else {
        let mut hi = 1.0;
        let mut guard = 0;
        while slope(hi) < 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::OracleNonConvergence("dual bracket did not close".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let from_dual = add_scaled(ge, lambda, gp);
    let gap = max_abs_diff(&from_dual, &d);
    if gap > 1e-8 * (1.0 + norm(ge)) {
        return Err(Error::OracleNonConvergence(format!(
            "primal and dual disagree by {gap:e}"
        )));
    }
    Ok(QpSolution {
        direction: d,
        lambda,
        primal_iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: &[f64], p: &[f64]) -> GradientPair<f64> {
        GradientPair::from_f64(e, p).unwrap()
    }

    #[test]
    fn aligned_gradients_leave_direction() {
        let s = qp_oracle(&pair(&[1.0, 0.0], &[1.0, 0.0]), 0.0).unwrap();
        assert!(max_abs_diff(&s.direction, &[1.0, 0.0]) < 1e-12);
        assert_eq!(s.lambda, 0.0);
    }

    #[test]
    fn conflicting_example() {
        let s = qp_oracle(&pair(&[1.0, 0.0], &[-1.0, 1.0]), 0.0).unwrap();
        assert!((s.direction[0] - 0.5).abs() < 1e-10);
        assert!((s.direction[1] - 0.5).abs() < 1e-10);
        assert!((s.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deadlock_and_tolerance() {
        let s = qp_oracle(&pair(&[0.5], &[-0.5]), 0.0).unwrap();
        assert!(s.direction[0].abs() < 1e-12);
        let s = qp_oracle(&pair(&[0.5], &[-0.5]), 0.1).unwrap();
        assert!((s.direction[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_preservation_gradient() {
        let s = qp_oracle(&pair(&[0.3, 0.4], &[0.0, 0.0]), 0.5).unwrap();
        assert!(max_abs_diff(&s.direction, &[0.3, 0.4]) < 1e-12);
        assert_eq!(s.lambda, 0.0);
    }
}
