//! Central finite differences, used as the independent oracle for every
//! analytic gradient in the workspace.

use crate::vector::norm;
use crate::{Error, Result, Scalar};

/// Per-coordinate probe width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    /// Same `h` for every coordinate.
    Fixed(f64),
    /// `h · (1 + |θ_i|)`.
    Relative(f64),
}

impl Default for FdStep {
    fn default() -> Self {
        FdStep::Relative(1e-6)
    }
}

impl FdStep {
    fn width<T: Scalar>(&self, x: T) -> T {
        match *self {
            FdStep::Fixed(h) => T::lit(h),
            FdStep::Relative(h) => T::lit(h) * (T::one() + x.abs()),
        }
    }

    fn base(&self) -> f64 {
        match *self {
            FdStep::Fixed(h) | FdStep::Relative(h) => h,
        }
    }
}

/// `(f(θ + h e_i) − f(θ − h e_i)) / 2h` for every coordinate.
pub fn finite_difference_gradient<T, F>(f: F, theta: &[T], step: FdStep) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let h0 = step.base();
    if !(h0.is_finite() && h0 > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h0}")));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = step.width(theta[i]);
        probe[i] = theta[i] + h;
        let plus = f(&probe);
        probe[i] = theta[i] - h;
        let minus = f(&probe);
        probe[i] = theta[i];
        for v in [plus, minus] {
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    index: i,
                    value: v.as_f64(),
                });
            }
        }
        // the realized width, (θ+h)−(θ−h), absorbs rounding of the probes
        let span = (theta[i] + h) - (theta[i] - h);
        grad.push((plus - minus) / span);
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> T {
    let diff: Vec<T> = analytic.iter().zip(numeric).map(|(&a, &b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == T::zero() {
        T::zero()
    } else {
        norm(&diff) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm() {
        let g = finite_difference_gradient(
            |t: &[f64]| 0.5 * t.iter().map(|x| x * x).sum::<f64>(),
            &[3.0],
            FdStep::Fixed(1e-6),
        )
        .unwrap();
        assert!((g[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_gives_zero() {
        let g = finite_difference_gradient(|_: &[f64]| 7.5, &[1.0, -2.0, 1e3], FdStep::default()).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn product_rule() {
        let g = finite_difference_gradient(|t: &[f64]| t[0] * t[1], &[2.0, 5.0], FdStep::default()).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_probe_is_reported() {
        let err = finite_difference_gradient(
            |t: &[f64]| if t[1] > 0.0 { f64::NAN } else { t[0] },
            &[1.0, 0.0],
            FdStep::Fixed(1e-3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: 1, .. }));
        assert!(finite_difference_gradient(|t: &[f64]| t[0], &[1.0], FdStep::Fixed(0.0)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let g = finite_difference_gradient(|t: &[f32]| t[0] * t[0], &[1.5f32], FdStep::Fixed(1e-2)).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn relative_error_scale() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0f64, 0.0], &[1.0, 1e-3]) - 1e-3 / (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);
    }
}
