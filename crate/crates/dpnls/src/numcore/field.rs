//! Sampled radial functions.

use super::grid::RadialGrid;
use super::scalar::Scalar;
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct RadialField<T> {
    grid: Arc<RadialGrid>,
    values: Vec<T>,
}

pub type RealField = RadialField<f64>;
pub type ComplexField = RadialField<Complex64>;

impl<T: Scalar> RadialField<T> {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Param(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![T::zero(); n] }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> T) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { grid: self.grid.clone(), values }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> RadialField<U> {
        RadialField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// f(r_i, v_i) pointwise.
    pub fn map_r<U: Scalar>(&self, f: impl Fn(f64, T) -> U) -> RadialField<U> {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&r, &v)| f(r, v)).collect();
        RadialField { grid: self.grid.clone(), values }
    }

    pub fn same_grid<U>(&self, other: &RadialField<U>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// ⟨f, g⟩ = Re ∫ f ḡ.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((a, b), w)| w * a.dot_re(*b))
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(a, w)| w * a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn grad_norm_sqr(&self) -> f64 {
        self.grid.grad_norm_sqr(&self.values)
    }

    /// ‖f‖²_{H¹} = ‖∇f‖² + ‖f‖².
    pub fn h1_norm_sqr(&self) -> f64 {
        self.grad_norm_sqr() + self.norm_sqr()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn laplacian(&self) -> Self {
        self.with_values(self.grid.laplacian().apply(&self.values))
    }

    /// Λf = (d/2) f + r ∂_r f.
    pub fn lambda(&self) -> Self {
        let dr = self.grid.d1().apply(&self.values);
        let half_d = self.grid.dim() as f64 / 2.0;
        let values = self
            .values
            .iter()
            .zip(&dr)
            .zip(self.grid.nodes())
            .map(|((&v, &g), &r)| v * half_d + g * r)
            .collect();
        self.with_values(values)
    }

    pub fn dr(&self) -> Self {
        self.with_values(self.grid.d1().apply(&self.values))
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| v * a)
    }

    pub fn axpy(&self, a: f64, x: &Self) -> Self {
        let values = self.values.iter().zip(&x.values).map(|(&u, &v)| u + v * a).collect();
        self.with_values(values)
    }

    pub fn add(&self, x: &Self) -> Self {
        self.axpy(1.0, x)
    }

    pub fn sub(&self, x: &Self) -> Self {
        self.axpy(-1.0, x)
    }

    /// Pointwise product with a real field.
    pub fn mul_real(&self, x: &RealField) -> Self {
        let values = self.values.iter().zip(x.values()).map(|(&u, &v)| u * v).collect();
        self.with_values(values)
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }
}

impl ComplexField {
    pub fn re(&self) -> RealField {
        self.map(|v| v.re)
    }
    pub fn im(&self) -> RealField {
        self.map(|v| v.im)
    }
    pub fn times_i(&self) -> Self {
        self.map(|v| v * Complex64::i())
    }
    pub fn cmul(&self, a: Complex64) -> Self {
        self.map(|v| v * a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(d: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(d, 2000, 20.0).unwrap())
    }

    #[test]
    fn gaussian_norm_d1() {
        let f = RealField::from_fn(grid(1), |r| (-r * r / 2.0).exp());
        assert!((f.inner(&f).unwrap() - std::f64::consts::PI.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn mismatch_detected() {
        let a = RealField::zeros(grid(1));
        let b = RealField::zeros(Arc::new(RadialGrid::new(1, 100, 20.0).unwrap()));
        assert_eq!(a.inner(&b), Err(Error::GridMismatch));
    }

    proptest! {
        #[test]
        fn inner_properties(c in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.2f64..3.0), 1..4)) {
            let g = Arc::new(RadialGrid::new(2, 200, 15.0).unwrap());
            let f = ComplexField::from_fn(g.clone(), |r| c.iter().map(|&(a, b, w)| Complex64::new(a, b) * (-w * r * r).exp()).sum());
            let h = ComplexField::from_fn(g, |r| Complex64::new(1.0 + r, -r) * (-r).exp());
            prop_assert!(f.inner(&f).unwrap() >= 0.0);
            prop_assert!(f.times_i().inner(&f).unwrap().abs() <= 1e-14 * f.norm_sqr().max(1e-300));
            prop_assert_eq!(f.inner(&h).unwrap(), h.inner(&f).unwrap());
            prop_assert!((f.inner(&f).unwrap() - f.norm_sqr()).abs() <= 1e-14 * f.norm_sqr());
        }
    }
}
