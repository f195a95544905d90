//! The double-power nonlinearity and the exponents derived from it.

use crate::error::{Error, Result};
use crate::numcore::{ComplexField, Scalar};
use num_complex::Complex64;

/// Dimension `d` and subcritical power `p` with 1 < p < 1 + 4/d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub d: usize,
    pub p: f64,
}

impl Model {
    pub fn new(d: usize, p: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        let pc = 1.0 + 4.0 / d as f64;
        if !(p > 1.0 && p < pc) {
            return Err(Error::Param(format!("p = {p} outside (1, {pc}) for d = {d}")));
        }
        Ok(Self { d, p })
    }

    /// 4/d, the critical exponent.
    pub fn q(&self) -> f64 {
        4.0 / self.d as f64
    }

    /// α = 2 − d(p−1)/2.
    pub fn alpha(&self) -> f64 {
        2.0 - self.d as f64 * (self.p - 1.0) / 2.0
    }

    /// σ = 4/(4 + d(p−1)).
    pub fn sigma(&self) -> f64 {
        4.0 / (4.0 + self.d as f64 * (self.p - 1.0))
    }
}

/// |u|^{4/d} u
pub fn f_crit<T: Scalar>(d: usize, u: T) -> T {
    u * u.modulus().powf(4.0 / d as f64)
}

/// |u|^{p−1} u
pub fn g_pow<T: Scalar>(p: f64, u: T) -> T {
    u * u.modulus().powf(p - 1.0)
}

/// F(u) = d/(2d+4) |u|^{2+4/d}
pub fn big_f(d: usize, m: f64) -> f64 {
    let df = d as f64;
    df / (2.0 * df + 4.0) * m.powf(2.0 + 4.0 / df)
}

/// G(u) = |u|^{p+1}/(p+1)
pub fn big_g(p: f64, m: f64) -> f64 {
    m.powf(p + 1.0) / (p + 1.0)
}

/// Second variation d²N(w)(h,h) of ∫|u|^{k+2}/(k+2)-type potentials, N'(u) = |u|^k u.
pub fn second_variation(k: f64, w: Complex64, h: Complex64) -> f64 {
    let m2 = w.norm_sqr();
    if m2 == 0.0 {
        return 0.0;
    }
    let re = w.re * h.re + w.im * h.im;
    m2.powf(k / 2.0) * (h.norm_sqr() + k * re * re / m2)
}

/// ∫ F(u) over the field's grid.
pub fn int_f(d: usize, u: &ComplexField) -> f64 {
    u.values().iter().zip(u.grid().weights()).map(|(v, w)| w * big_f(d, v.norm())).sum()
}

/// ∫ G(u) over the field's grid.
pub fn int_g(p: f64, u: &ComplexField) -> f64 {
    u.values().iter().zip(u.grid().weights()).map(|(v, w)| w * big_g(p, v.norm())).sum()
}

/// E(u) = ½‖∇u‖² − ∫F(u) − ε∫G(u).
pub fn energy(model: &Model, eps: f64, u: &ComplexField) -> f64 {
    0.5 * u.grad_norm_sqr() - int_f(model.d, u) - eps * int_g(model.p, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_identities() {
        for (d, p) in [(1, 3.0), (1, 2.2), (2, 1.5), (3, 2.0)] {
            let m = Model::new(d, p).unwrap();
            assert!((m.sigma() - 2.0 / (4.0 - m.alpha())).abs() < 1e-15);
            assert!(m.alpha() > 0.0 && m.alpha() < 2.0);
        }
        let m = Model::new(1, 3.0).unwrap();
        assert_eq!(m.alpha(), 1.0);
        assert!((m.sigma() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_endpoints() {
        assert!(Model::new(1, 5.0).is_err());
        assert!(Model::new(1, 1.0).is_err());
        assert!(Model::new(4, 1.5).is_err());
    }

    #[test]
    fn second_variation_matches_difference_quotient() {
        let w = Complex64::new(0.7, -0.3);
        let h = Complex64::new(0.2, 0.5);
        let k = 4.0;
        let n = |u: Complex64| u.norm().powf(k + 2.0) / (k + 2.0);
        let e = 1e-4;
        let fd = (n(w + h * e) - 2.0 * n(w) + n(w - h * e)) / (e * e);
        assert!((fd - second_variation(k, w, h)).abs() < 1e-6);
    }
}
