//! Unilateral gradient surgery.
//!
//! Each step solves the local problem
//!
//! ```text
//! max_d  ∇L_e·d − ½‖d‖²   s.t.  ∇L_p·d ≥ −ε
//! ```
//!
//! whose dual is `min_{λ≥0} ½‖∇L_e + λ∇L_p‖² + λε`. The explicit solver
//! uses the closed form of both; the implicit solver runs projected online
//! gradient descent on `λ`, estimating the dual slope from the observed
//! change of `L_p` instead of from `∇L_p`.

mod solver;

pub use solver::{
    baseline_step, explicit_step, implicit_step, run, DriftMode, Instrumentation, RunAbort, RunOutput, SolverKind,
    SurgeryConfig, SurgeryState,
};

use crate::vector::{add_scaled, norm_sq, GradientPair};
use crate::{Error, Result, Scalar};

/// `½‖∇L_e + λ∇L_p‖² + λε`
pub fn dual_objective<T: Scalar>(lambda: T, grads: &GradientPair<T>, epsilon: T) -> T {
    let v = add_scaled(grads.e(), lambda, grads.p());
    T::lit(0.5) * norm_sq(&v) + lambda * epsilon
}

/// Unconstrained minimizer of the dual,
/// `λ* = (−∇L_p·∇L_e − ε) / ‖∇L_p‖²`.
///
/// The sign is meaningful: `λ* ≤ 0` means the erasure gradient already sits
/// inside the tolerance cone.
pub fn closed_form_lambda<T: Scalar>(grads: &GradientPair<T>, epsilon: T) -> Result<T> {
    let gram = grads.gram();
    if gram.pp == T::zero() {
        return Err(Error::DegeneratePreservation);
    }
    Ok((-gram.ep - epsilon) / gram.pp)
}

/// Result of one surgery.
#[derive(Debug, Clone, PartialEq)]
pub struct Surgered<T> {
    pub direction: Vec<T>,
    /// Unclamped multiplier; `None` when `∇L_p = 0`.
    pub lambda_star: Option<T>,
    /// Whether the preservation constraint binds (`λ* > 0`).
    pub active: bool,
}

impl<T: Scalar> Surgered<T> {
    /// The weight actually applied to `∇L_p`: `max(0, λ*)`.
    pub fn weight(&self) -> T {
        match self.lambda_star {
            Some(l) if self.active => l,
            _ => T::zero(),
        }
    }
}

/// Closed-form surgered direction: `∇L_e + λ*∇L_p` if `λ* > 0`, otherwise
/// `∇L_e` unchanged. A vanishing `∇L_p` leaves the constraint vacuous and
/// is treated as non-conflicting.
pub fn explicit_direction<T: Scalar>(grads: &GradientPair<T>, epsilon: T) -> Surgered<T> {
    match closed_form_lambda(grads, epsilon) {
        Ok(l) if l > T::zero() => Surgered {
            direction: add_scaled(grads.e(), l, grads.p()),
            lambda_star: Some(l),
            active: true,
        },
        Ok(l) => Surgered {
            direction: grads.e().to_vec(),
            lambda_star: Some(l),
            active: false,
        },
        Err(_) => Surgered {
            direction: grads.e().to_vec(),
            lambda_star: None,
            active: false,
        },
    }
}

/// Loss-only estimate of the dual slope,
/// `δ̃ = (L_p(before) − L_p(after)) / α + ε`.
pub fn drift_estimate<T: Scalar>(loss_p_prev: T, loss_p_curr: T, alpha: T, epsilon: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::Config(format!("drift estimate needs alpha > 0, got {alpha}")));
    }
    Ok((loss_p_prev - loss_p_curr) / alpha + epsilon)
}

/// `λ' = λ − β δ̃`, clamped at zero when `clamp` is set.
pub fn implicit_lambda_update<T: Scalar>(lambda: T, delta: T, beta: T, clamp: bool) -> T {
    let next = lambda - beta * delta;
    if clamp {
        next.max(T::zero())
    } else {
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::dot;

    fn pair(e: &[f64], p: &[f64]) -> GradientPair<f64> {
        GradientPair::from_f64(e, p).unwrap()
    }

    #[test]
    fn dual_objective_values() {
        assert_eq!(dual_objective(0.0, &pair(&[1.0, 0.0], &[3.0, -7.0]), 0.0), 0.5);
        assert_eq!(dual_objective(1.0, &pair(&[1.0, 0.0], &[0.0, 1.0]), 0.0), 1.0);
        let v = dual_objective(0.5, &pair(&[1.0, 0.0], &[-1.0, 0.0]), 0.2);
        assert!((v - 0.225).abs() < 1e-15);
    }

    #[test]
    fn closed_form_lambda_values() {
        assert_eq!(closed_form_lambda(&pair(&[1.0, 0.0], &[1.0, 0.0]), 0.0).unwrap(), -1.0);
        assert_eq!(closed_form_lambda(&pair(&[1.0, 0.0], &[-1.0, 1.0]), 0.0).unwrap(), 0.5);
        assert_eq!(closed_form_lambda(&pair(&[1.0, 0.0], &[-1.0, 0.0]), 0.5).unwrap(), 0.5);
        assert_eq!(
            closed_form_lambda(&pair(&[1.0, 0.0], &[0.0, 0.0]), 0.1),
            Err(Error::DegeneratePreservation)
        );
    }

    /// Dense grid over `[0, 10]` at spacing 1e-4, minimizing the dual.
    fn grid_minimizer(g: &GradientPair<f64>, eps: f64) -> f64 {
        (0..=100_000)
            .map(|i| i as f64 * 1e-4)
            .min_by(|a, b| {
                dual_objective(*a, g, eps)
                    .partial_cmp(&dual_objective(*b, g, eps))
                    .unwrap()
            })
            .unwrap()
    }

    #[test]
    fn closed_form_matches_grid_minimizer() {
        for (e, p, eps) in [
            (vec![1.0, 0.0], vec![-1.0, 1.0], 0.0),
            (vec![1.0, 0.0], vec![-1.0, 0.0], 0.5),
        ] {
            let g = pair(&e, &p);
            let grid = grid_minimizer(&g, eps);
            let closed = closed_form_lambda(&g, eps).unwrap();
            assert!((grid - closed).abs() <= 1e-4, "grid {grid} closed {closed}");
        }
    }

    #[test]
    fn explicit_direction_examples() {
        let s = explicit_direction(&pair(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(s.direction, vec![1.0, 0.0]);
        assert!(!s.active);

        let s = explicit_direction(&pair(&[1.0, 0.0], &[-1.0, 1.0]), 0.0);
        assert_eq!(s.direction, vec![0.5, 0.5]);
        assert_eq!(s.weight(), 0.5);

        // L_e = ½θ², L_p = ½(θ−1)² at θ = 0.5: exact opposition
        let g = pair(&[0.5], &[-0.5]);
        assert_eq!(explicit_direction(&g, 0.0).direction, vec![0.0]);
        let d = explicit_direction(&g, 0.1).direction;
        assert!((d[0] - 0.2).abs() < 1e-15);
        assert!((dot(g.p(), &d) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate_preservation_is_non_conflicting() {
        let g = pair(&[0.3, -0.2], &[0.0, 0.0]);
        let s = explicit_direction(&g, 0.01);
        assert_eq!(s.direction, g.e().to_vec());
        assert_eq!(s.lambda_star, None);
        assert_eq!(s.weight(), 0.0);
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift_estimate(1.3, 1.3, 0.1, 0.07).unwrap(), 0.07);
        assert!((drift_estimate(1.0f64, 1.2, 0.1, 0.0).unwrap() + 2.0).abs() < 1e-12);
        assert!((drift_estimate(2.0f64, 1.9, 0.1, 0.5).unwrap() - 1.5).abs() < 1e-12);
        assert!(drift_estimate(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(drift_estimate(1.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn lambda_update_examples() {
        assert!((implicit_lambda_update(0.5f64, -2.0, 0.1, true) - 0.7).abs() < 1e-15);
        assert_eq!(implicit_lambda_update(0.05, 1.0, 0.1, true), 0.0);
        assert!(implicit_lambda_update(0.05, 1.0, 0.1, false) < 0.0);
        assert_eq!(implicit_lambda_update(0.4, 0.0, 0.1, true), 0.4);
    }

    #[test]
    fn single_precision_surgery() {
        let g = GradientPair::<f32>::from_f64(&[1.0, 0.0], &[-1.0, 1.0]).unwrap();
        let s = explicit_direction(&g, 0.0f32);
        assert_eq!(s.direction, vec![0.5f32, 0.5]);
    }
}
