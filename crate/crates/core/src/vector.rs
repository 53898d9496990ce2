//! Dense vectors for parameters and gradient pairs.

use std::ops::Index;

use crate::{Error, Result, Scalar};

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

/// `a + s * b`
pub fn add_scaled<T: Scalar>(a: &[T], s: T, b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn scale<T: Scalar>(s: T, a: &[T]) -> Vec<T> {
    a.iter().map(|&x| s * x).collect()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max)
}

/// First non-finite entry, if any.
pub fn find_non_finite<T: Scalar>(a: &[T]) -> Option<(usize, T)> {
    a.iter().copied().enumerate().find(|(_, v)| !v.is_finite())
}

fn check_finite<T: Scalar>(what: &'static str, a: &[T]) -> Result<()> {
    match find_non_finite(a) {
        Some((index, value)) => Err(Error::NonFinite {
            what,
            index,
            value: value.as_f64(),
        }),
        None => Ok(()),
    }
}

/// Flat parameter vector `θ`. Entries are finite and the dimension is fixed
/// after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec<T> {
    values: Vec<T>,
}

impl<T: Scalar> ParamVec<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        check_finite("parameters", &values)?;
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![T::zero(); dim])
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<T> {
        self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }

    /// `θ ← θ − step · direction`. Rejects a mismatched or non-finite result
    /// and leaves `self` untouched in that case.
    pub fn descend(&mut self, step: T, direction: &[T]) -> Result<()> {
        if direction.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: direction.len(),
            });
        }
        let next = add_scaled(&self.values, -step, direction);
        check_finite("parameters", &next)?;
        self.values = next;
        Ok(())
    }
}

impl<T> Index<usize> for ParamVec<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// Gradients of both objectives at the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair<T> {
    erase: Vec<T>,
    preserve: Vec<T>,
}

impl<T: Scalar> GradientPair<T> {
    pub fn new(grad_e: Vec<T>, grad_p: Vec<T>) -> Result<Self> {
        if grad_e.is_empty() {
            return Err(Error::Empty);
        }
        if grad_e.len() != grad_p.len() {
            return Err(Error::DimensionMismatch {
                expected: grad_e.len(),
                found: grad_p.len(),
            });
        }
        check_finite("erasure gradient", &grad_e)?;
        check_finite("preservation gradient", &grad_p)?;
        Ok(Self {
            erase: grad_e,
            preserve: grad_p,
        })
    }

    pub fn from_f64(grad_e: &[f64], grad_p: &[f64]) -> Result<Self> {
        Self::new(
            grad_e.iter().map(|&v| T::lit(v)).collect(),
            grad_p.iter().map(|&v| T::lit(v)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.erase.len()
    }

    /// `∇L_e`
    pub fn e(&self) -> &[T] {
        &self.erase
    }

    /// `∇L_p`
    pub fn p(&self) -> &[T] {
        &self.preserve
    }

    /// Gram entries `(‖g_e‖², g_e·g_p, ‖g_p‖²)`.
    pub fn gram(&self) -> Gram<T> {
        Gram {
            ee: norm_sq(&self.erase),
            ep: dot(&self.erase, &self.preserve),
            pp: norm_sq(&self.preserve),
        }
    }
}

/// Inner products of a gradient pair. Every two-objective quantity in this
/// crate (dual objective, multiplier, min-norm point) is a function of these
/// three numbers plus `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gram<T> {
    pub ee: T,
    pub ep: T,
    pub pp: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert_eq!(ParamVec::<f64>::new(vec![]), Err(Error::Empty));
        assert!(matches!(
            ParamVec::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            GradientPair::new(vec![1.0], vec![1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            GradientPair::new(vec![f64::INFINITY], vec![1.0]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn descend_preserves_dimension_and_rejects_overflow() {
        let mut theta = ParamVec::new(vec![1.0_f64, 2.0]).unwrap();
        theta.descend(0.5, &[2.0, -2.0]).unwrap();
        assert_eq!(theta.as_slice(), &[0.0, 3.0]);
        assert!(theta.descend(1.0, &[1.0]).is_err());
        assert!(theta.descend(f64::MAX, &[f64::MAX, 0.0]).is_err());
        assert_eq!(theta.as_slice(), &[0.0, 3.0]);
    }

    #[test]
    fn gram_entries() {
        let g = GradientPair::new(vec![1.0_f32, 2.0], vec![3.0, -1.0]).unwrap();
        let gram = g.gram();
        assert_eq!((gram.ee, gram.ep, gram.pp), (5.0, 1.0, 10.0));
    }
}
