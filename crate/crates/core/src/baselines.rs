//! Two-objective comparison directions: fixed-weight linear scalarization,
//! PCGrad projection, and the MGDA min-norm point.

use crate::vector::{add_scaled, dot, norm_sq, GradientPair, Gram};
use crate::{Error, Result, Scalar};

/// `∇L_e + λ∇L_p` with a fixed `λ ≥ 0`.
pub fn linear_direction<T: Scalar>(grads: &GradientPair<T>, lambda: T) -> Result<Vec<T>> {
    if !(lambda.is_finite() && lambda >= T::zero()) {
        return Err(Error::Config(format!(
            "linear weight must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(add_scaled(grads.e(), lambda, grads.p()))
}

/// Symmetric PCGrad for two tasks: when the gradients conflict, each one is
/// projected onto the normal plane of the other before summing. A zero
/// counterpart skips its projection.
pub fn pcgrad_direction<T: Scalar>(grads: &GradientPair<T>) -> Vec<T> {
    let (e, p) = (grads.e(), grads.p());
    let gram = grads.gram();
    if gram.ep >= T::zero() {
        return add_scaled(e, T::one(), p);
    }
    let e_proj = if gram.pp > T::zero() {
        add_scaled(e, -gram.ep / gram.pp, p)
    } else {
        e.to_vec()
    };
    let p_proj = if gram.ee > T::zero() {
        add_scaled(p, -gram.ep / gram.ee, e)
    } else {
        p.to_vec()
    };
    add_scaled(&e_proj, T::one(), &p_proj)
}

/// Weight `γ*` on `∇L_e` of the min-norm point of the segment between the
/// two gradients, `clip(((g_p − g_e)·g_p) / ‖g_e − g_p‖², 0, 1)`; 1 when the
/// gradients coincide.
pub fn min_norm_weight<T: Scalar>(gram: Gram<T>) -> T {
    let denom = gram.ee - T::lit(2.0) * gram.ep + gram.pp;
    if !(denom > T::zero()) {
        return T::one();
    }
    ((gram.pp - gram.ep) / denom).max(T::zero()).min(T::one())
}

/// `γ g_e + (1 − γ) g_p` for a given weight.
pub fn convex_combination<T: Scalar>(grads: &GradientPair<T>, gamma: T) -> Vec<T> {
    grads
        .e()
        .iter()
        .zip(grads.p())
        .map(|(&a, &b)| gamma * a + (T::one() - gamma) * b)
        .collect()
}

/// MGDA for two tasks: the min-norm element of the convex hull of the two
/// gradients.
pub fn mgda_direction<T: Scalar>(grads: &GradientPair<T>) -> Vec<T> {
    if grads.e() == grads.p() {
        return grads.e().to_vec();
    }
    let diff: Vec<T> = grads.e().iter().zip(grads.p()).map(|(&a, &b)| a - b).collect();
    // the difference is formed directly so nearly equal gradients keep precision
    let denom = norm_sq(&diff);
    if !(denom > T::zero()) {
        return grads.e().to_vec();
    }
    let gamma = (-dot(&diff, grads.p()) / denom).max(T::zero()).min(T::one());
    convex_combination(grads, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::norm;

    fn pair(e: &[f64], p: &[f64]) -> GradientPair<f64> {
        GradientPair::from_f64(e, p).unwrap()
    }

    #[test]
    fn linear_examples() {
        let g = pair(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(linear_direction(&g, 0.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(linear_direction(&g, 1.0).unwrap(), vec![1.0, 1.0]);
        let g = pair(&[1.0, 0.0], &[-1.0, 0.0]);
        assert_eq!(linear_direction(&g, 10.0).unwrap(), vec![-9.0, 0.0]);
        assert!(linear_direction(&g, -0.5).is_err());
    }

    #[test]
    fn pcgrad_examples() {
        assert_eq!(pcgrad_direction(&pair(&[1.0, 0.0], &[0.0, 1.0])), vec![1.0, 1.0]);
        assert_eq!(pcgrad_direction(&pair(&[1.0, 0.0], &[-1.0, 0.0])), vec![0.0, 0.0]);
        let d = pcgrad_direction(&pair(&[1.0, 0.0], &[-1.0, 1.0]));
        // by hand: g_e' = (1,0) + ½(−1,1) = (0.5, 0.5); g_p' = (−1,1) + (1,0) = (0, 1)
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn mgda_examples() {
        assert_eq!(mgda_direction(&pair(&[2.0, 0.0], &[2.0, 0.0])), vec![2.0, 0.0]);
        assert_eq!(mgda_direction(&pair(&[1.0, -3.0], &[-1.0, 3.0])), vec![0.0, 0.0]);
        let d = mgda_direction(&pair(&[1.0, 0.0], &[0.0, 1.0]));
        let grid = (0..=100_000)
            .map(|i| {
                let g = i as f64 * 1e-5;
                norm(&[g, 1.0 - g])
            })
            .fold(f64::INFINITY, f64::min);
        assert!((norm(&d) - grid).abs() < 1e-6);
        assert_eq!(d, vec![0.5, 0.5]);
    }

    #[test]
    fn orthogonal_reductions() {
        let g = pair(&[3.0, 0.0], &[0.0, 3.0]);
        assert_eq!(pcgrad_direction(&g), vec![3.0, 3.0]);
        assert_eq!(linear_direction(&g, 1.0).unwrap(), vec![3.0, 3.0]);
        assert_eq!(mgda_direction(&g), vec![1.5, 1.5]);
    }

    #[test]
    fn min_norm_weight_edges() {
        let g = pair(&[1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(min_norm_weight(g.gram()), 1.0);
        // g_p is already the shorter end of the segment
        let g = pair(&[2.0, 0.0], &[0.5, 0.0]);
        assert_eq!(min_norm_weight(g.gram()), 0.0);
    }
}
