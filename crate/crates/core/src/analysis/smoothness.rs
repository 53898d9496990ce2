use crate::objective::ObjectivePair;
use crate::rng::SeededRng;
use crate::vector::{norm, scale, sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessEstimate {
    /// Largest observed gradient-difference ratio over both objectives.
    pub smoothness: f64,
    /// Largest observed gradient norm.
    pub lipschitz: f64,
}

/// Empirical `G` and `L` over the box `center ± radius`.
///
/// Random point pairs give a lower bound on `G`; a short power iteration on
/// gradient differences from each sampled point sharpens it toward the
/// largest local curvature.
pub fn estimate_smoothness<P: ObjectivePair<f64>>(
    pair: &P,
    center: &[f64],
    radius: f64,
    samples: usize,
    rng: &mut SeededRng,
) -> SmoothnessEstimate {
    let n = center.len();
    let mut g_max: f64 = 0.0;
    let mut l_max: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = center.iter().map(|c| c + rng.uniform(-radius, radius)).collect();
        let y: Vec<f64> = center.iter().map(|c| c + rng.uniform(-radius, radius)).collect();
        let mut v = rng.normal_vec(n);
        let vn = norm(&v);
        v = scale(1.0 / vn, &v);
        for which in [0, 1] {
            let grad = |x: &[f64]| if which == 0 { pair.grad_e(x) } else { pair.grad_p(x) };
            let gx = grad(&x);
            l_max = l_max.max(norm(&gx));
            let dx = norm(&sub(&x, &y));
            if dx > 0.0 {
                g_max = g_max.max(norm(&sub(&gx, &grad(&y))) / dx);
            }
            let h = 1e-4 * (1.0 + norm(&x));
            let mut u = v.clone();
            for _ in 0..30 {
                let probe: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + h * b).collect();
                let hv = scale(1.0 / h, &sub(&grad(&probe), &gx));
                let r = norm(&hv);
                if !(r > 0.0) || !r.is_finite() {
                    break;
                }
                g_max = g_max.max(r);
                u = scale(1.0 / r, &hv);
            }
        }
    }
    SmoothnessEstimate {
        smoothness: g_max,
        lipschitz: l_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnPair;

    #[test]
    fn recovers_largest_curvature_of_diagonal_quadratic() {
        let pair = FnPair::new(
            3,
            |t: &[f64]| 0.5 * (t[0] * t[0] + 4.0 * t[1] * t[1] + 9.0 * t[2] * t[2]),
            |t: &[f64]| 0.5 * t.iter().map(|x| x * x).sum::<f64>(),
            |t: &[f64]| vec![t[0], 4.0 * t[1], 9.0 * t[2]],
            |t: &[f64]| t.to_vec(),
        );
        let est = estimate_smoothness(&pair, &[0.0; 3], 1.0, 8, &mut SeededRng::new(3));
        assert!((est.smoothness - 9.0).abs() < 1e-6, "{est:?}");
        assert!(est.lipschitz > 0.0);
    }
}
