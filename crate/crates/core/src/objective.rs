//! Objective pairs and the call-counting oracle that solvers consume.

use std::cell::Cell;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::vector::{add_scaled, GradientPair};
use crate::{Result, Scalar};

/// An erasure objective `L_e` and a preservation objective `L_p` over the
/// same parameter space.
///
/// Loss and gradient evaluation are separate methods so that loss-only work
/// (the implicit solver's drift estimate) is distinguishable from
/// backpropagation.
pub trait ObjectivePair<T: Scalar> {
    fn dim(&self) -> usize;

    fn loss_e(&self, theta: &[T]) -> T;

    fn loss_p(&self, theta: &[T]) -> T;

    fn grad_e(&self, theta: &[T]) -> Vec<T>;

    fn grad_p(&self, theta: &[T]) -> Vec<T>;

    /// `∇(L_e + λ L_p)` as a single backward pass. Implementations with a
    /// shared forward pass should override this.
    fn grad_composite(&self, theta: &[T], lambda: T) -> Vec<T> {
        add_scaled(&self.grad_e(theta), lambda, &self.grad_p(theta))
    }
}

impl<T: Scalar, P: ObjectivePair<T> + ?Sized> ObjectivePair<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn loss_e(&self, theta: &[T]) -> T {
        (**self).loss_e(theta)
    }
    fn loss_p(&self, theta: &[T]) -> T {
        (**self).loss_p(theta)
    }
    fn grad_e(&self, theta: &[T]) -> Vec<T> {
        (**self).grad_e(theta)
    }
    fn grad_p(&self, theta: &[T]) -> Vec<T> {
        (**self).grad_p(theta)
    }
    fn grad_composite(&self, theta: &[T], lambda: T) -> Vec<T> {
        (**self).grad_composite(theta, lambda)
    }
}

impl<T: Scalar, P: ObjectivePair<T> + ?Sized> ObjectivePair<T> for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn loss_e(&self, theta: &[T]) -> T {
        (**self).loss_e(theta)
    }
    fn loss_p(&self, theta: &[T]) -> T {
        (**self).loss_p(theta)
    }
    fn grad_e(&self, theta: &[T]) -> Vec<T> {
        (**self).grad_e(theta)
    }
    fn grad_p(&self, theta: &[T]) -> Vec<T> {
        (**self).grad_p(theta)
    }
    fn grad_composite(&self, theta: &[T], lambda: T) -> Vec<T> {
        (**self).grad_composite(theta, lambda)
    }
}

/// Objective pair assembled from four closures.
pub struct FnPair<T, LE, LP, GE, GP> {
    dim: usize,
    loss_e: LE,
    loss_p: LP,
    grad_e: GE,
    grad_p: GP,
    _scalar: PhantomData<fn() -> T>,
}

impl<T, LE, LP, GE, GP> FnPair<T, LE, LP, GE, GP>
where
    T: Scalar,
    LE: Fn(&[T]) -> T,
    LP: Fn(&[T]) -> T,
    GE: Fn(&[T]) -> Vec<T>,
    GP: Fn(&[T]) -> Vec<T>,
{
    pub fn new(dim: usize, loss_e: LE, loss_p: LP, grad_e: GE, grad_p: GP) -> Self {
        Self {
            dim,
            loss_e,
            loss_p,
            grad_e,
            grad_p,
            _scalar: PhantomData,
        }
    }
}

impl<T, LE, LP, GE, GP> ObjectivePair<T> for FnPair<T, LE, LP, GE, GP>
where
    T: Scalar,
    LE: Fn(&[T]) -> T,
    LP: Fn(&[T]) -> T,
    GE: Fn(&[T]) -> Vec<T>,
    GP: Fn(&[T]) -> Vec<T>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn loss_e(&self, theta: &[T]) -> T {
        (self.loss_e)(theta)
    }
    fn loss_p(&self, theta: &[T]) -> T {
        (self.loss_p)(theta)
    }
    fn grad_e(&self, theta: &[T]) -> Vec<T> {
        (self.grad_e)(theta)
    }
    fn grad_p(&self, theta: &[T]) -> Vec<T> {
        (self.grad_p)(theta)
    }
}

/// Cumulative oracle calls by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounts {
    pub loss_e: u64,
    pub loss_p: u64,
    pub grad_e: u64,
    pub grad_p: u64,
    pub grad_composite: u64,
    /// Separate-gradient queries made only to fill trace diagnostics.
    pub instrumentation: u64,
}

impl OracleCounts {
    /// Backward passes charged to the solver (instrumentation excluded).
    pub fn gradient_evaluations(&self) -> u64 {
        self.grad_e + self.grad_p + self.grad_composite
    }

    pub fn loss_evaluations(&self) -> u64 {
        self.loss_e + self.loss_p
    }
}

/// Owns one objective pair for the duration of a run and counts every call.
///
/// Counters live in `Cell`s: an oracle belongs to exactly one run and is not
/// shared across threads.
pub struct Oracle<T, P> {
    pair: P,
    counts: Cell<OracleCounts>,
    _scalar: PhantomData<fn() -> T>,
}

impl<T: Scalar, P: ObjectivePair<T>> Oracle<T, P> {
    pub fn new(pair: P) -> Self {
        Self {
            pair,
            counts: Cell::new(OracleCounts::default()),
            _scalar: PhantomData,
        }
    }

    pub fn dim(&self) -> usize {
        self.pair.dim()
    }

    pub fn counts(&self) -> OracleCounts {
        self.counts.get()
    }

    pub fn pair(&self) -> &P {
        &self.pair
    }

    pub fn into_inner(self) -> P {
        self.pair
    }

    fn bump(&self, f: impl FnOnce(&mut OracleCounts)) {
        let mut c = self.counts.get();
        f(&mut c);
        self.counts.set(c);
    }

    pub fn loss_e(&self, theta: &[T]) -> T {
        self.bump(|c| c.loss_e += 1);
        self.pair.loss_e(theta)
    }

    pub fn loss_p(&self, theta: &[T]) -> T {
        self.bump(|c| c.loss_p += 1);
        self.pair.loss_p(theta)
    }

    pub fn grad_e(&self, theta: &[T]) -> Vec<T> {
        self.bump(|c| c.grad_e += 1);
        self.pair.grad_e(theta)
    }

    pub fn grad_p(&self, theta: &[T]) -> Vec<T> {
        self.bump(|c| c.grad_p += 1);
        self.pair.grad_p(theta)
    }

    pub fn grad_composite(&self, theta: &[T], lambda: T) -> Vec<T> {
        self.bump(|c| c.grad_composite += 1);
        self.pair.grad_composite(theta, lambda)
    }

    /// Both gradients through the solver's budget (two backward passes).
    pub fn gradients(&self, theta: &[T]) -> Result<GradientPair<T>> {
        GradientPair::new(self.grad_e(theta), self.grad_p(theta))
    }

    /// Both gradients for diagnostics only; charged to `instrumentation`.
    pub fn instrument(&self, theta: &[T]) -> Result<GradientPair<T>> {
        self.bump(|c| c.instrumentation += 1);
        GradientPair::new(self.pair.grad_e(theta), self.pair.grad_p(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_quadratics() -> impl ObjectivePair<f64> {
        FnPair::new(
            1,
            |t: &[f64]| 0.5 * t[0] * t[0],
            |t: &[f64]| 0.5 * (t[0] - 1.0).powi(2),
            |t: &[f64]| vec![t[0]],
            |t: &[f64]| vec![t[0] - 1.0],
        )
    }

    #[test]
    fn loss_calls_never_touch_gradient_counters() {
        let oracle = Oracle::new(scalar_quadratics());
        for _ in 0..5 {
            oracle.loss_e(&[0.3]);
            oracle.loss_p(&[0.3]);
        }
        let c = oracle.counts();
        assert_eq!(c.loss_evaluations(), 10);
        assert_eq!(c.gradient_evaluations(), 0);
    }

    #[test]
    fn counters_are_monotone_and_split_by_kind() {
        let oracle = Oracle::new(scalar_quadratics());
        let mut last = 0;
        for i in 0..4 {
            if i % 2 == 0 {
                oracle.grad_composite(&[0.5], 2.0);
            } else {
                oracle.gradients(&[0.5]).unwrap();
            }
            let now = oracle.counts().gradient_evaluations();
            assert!(now > last);
            last = now;
        }
        let c = oracle.counts();
        assert_eq!((c.grad_composite, c.grad_e, c.grad_p), (2, 2, 2));
        oracle.instrument(&[0.5]).unwrap();
        assert_eq!(oracle.counts().gradient_evaluations(), 6);
        assert_eq!(oracle.counts().instrumentation, 1);
    }

    #[test]
    fn default_composite_gradient() {
        let pair = scalar_quadratics();
        // θ + 2(θ − 1) at θ = 0.5
        assert_eq!(pair.grad_composite(&[0.5], 2.0), vec![-0.5]);
    }
}
