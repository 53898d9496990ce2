use tolcone_core::{ObjectivePair, SeededRng};

/// Smooth non-convex pair over `R^n`:
///
/// ```text
/// L_e(θ) = Σ_i ln(1 + (θ_i − a_i)²)
/// L_p(θ) = Σ_i ½(θ_i − b_i)² + s (1 − cos(2(θ_i − b_i)))
/// ```
///
/// Both are `G`-smooth with `G ≤ max(2, 1 + 4s)`; the Cauchy term is
/// concave away from its center and the cosine ripple adds local minima
/// when `s > ¼`.
#[derive(Debug, Clone)]
pub struct NonconvexPair {
    a: Vec<f64>,
    b: Vec<f64>,
    ripple: f64,
}

impl NonconvexPair {
    pub fn new(a: Vec<f64>, b: Vec<f64>, ripple: f64) -> Self {
        assert_eq!(a.len(), b.len(), "center dimensions differ");
        Self { a, b, ripple }
    }

    /// Centers drawn as `N(0, spread²)`.
    pub fn random(dim: usize, spread: f64, ripple: f64, rng: &mut SeededRng) -> Self {
        let a = rng.normal_vec(dim).into_iter().map(|x| spread * x).collect();
        let b = rng.normal_vec(dim).into_iter().map(|x| spread * x).collect();
        Self::new(a, b, ripple)
    }

    pub fn smoothness_bound(&self) -> f64 {
        2.0f64.max(1.0 + 4.0 * self.ripple)
    }
}

impl ObjectivePair<f64> for NonconvexPair {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn loss_e(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.a).map(|(x, a)| (x - a).powi(2).ln_1p()).sum()
    }

    fn loss_p(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.b)
            .map(|(x, b)| {
                let u = x - b;
                0.5 * u * u + self.ripple * (1.0 - (2.0 * u).cos())
            })
            .sum()
    }

    fn grad_e(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.a)
            .map(|(x, a)| {
                let u = x - a;
                2.0 * u / (1.0 + u * u)
            })
            .collect()
    }

    fn grad_p(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.b)
            .map(|(x, b)| {
                let u = x - b;
                u + 2.0 * self.ripple * (2.0 * u).sin()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tolcone_core::fd::{finite_difference_gradient, relative_error, FdStep};

    #[test]
    fn gradients_match_finite_differences() {
        let pair = NonconvexPair::random(5, 1.5, 0.4, &mut SeededRng::new(9));
        let mut rng = SeededRng::new(10);
        for _ in 0..20 {
            let theta = rng.normal_vec(5);
            let fd = finite_difference_gradient(|t: &[f64]| pair.loss_e(t), &theta, FdStep::default()).unwrap();
            assert!(relative_error(&pair.grad_e(&theta), &fd) < 1e-5);
            let fd = finite_difference_gradient(|t: &[f64]| pair.loss_p(t), &theta, FdStep::default()).unwrap();
            assert!(relative_error(&pair.grad_p(&theta), &fd) < 1e-5);
        }
    }

    #[test]
    fn curvature_changes_sign() {
        let pair = NonconvexPair::new(vec![0.0], vec![0.0], 0.4);
        // ln(1+u²) is convex near 0 and concave beyond |u| = 1
        let h = 1e-4;
        let second = |u: f64| (pair.loss_e(&[u + h]) - 2.0 * pair.loss_e(&[u]) + pair.loss_e(&[u - h])) / (h * h);
        assert!(second(0.0) > 0.0);
        assert!(second(3.0) < 0.0);
    }
}
