//! Staggered radial grid and the discrete operators living on it.
//!
//! Nodes sit at cell centres r_i = (i + 1/2) h, so the origin is never a node
//! and every weight is positive. The Laplacian is written in flux form
//! Δ_h = -W⁻¹ Gᵀ S G where G is a fourth-order face gradient; this keeps Δ_h
//! self-adjoint in the weighted inner product and ⟨-Δ_h f, f⟩ = Σ S_j |G f|_j².
//!
//! In d = 3 the gradient acts on v = r f, which extends oddly through the
//! origin, so Δ_h = r⁻¹ D₂ r stays fourth order up to r = 0. In d = 2 the flux
//! r f'(r) is even, which the folded stencil gets wrong in the first cell;
//! shrinking that cell's weight by 11/12 makes Δ_h exact on quadratics there
//! and restores second order at the origin.

use super::banded::BandedMatrix;
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// |S^{d-1}|, area of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => f64::NAN,
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    d: usize,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    faces: Vec<(Vec<(usize, f64)>, f64)>,
    lap: BandedMatrix<f64>,
    d1: BandedMatrix<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.len() == other.len() && self.h.to_bits() == other.h.to_bits()
    }
}

/// Fold an (unbounded) cell index by even reflection at r = 0; `None` beyond the outer edge.
pub(crate) fn fold(i: i64, n: usize) -> Option<usize> {
    let k = if i < 0 { -i - 1 } else { i };
    if (k as usize) < n {
        Some(k as usize)
    } else {
        None
    }
}

impl RadialGrid {
    /// `n` cells of width `r_max / n`.
    pub fn new(d: usize, n: usize, r_max: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        if n < 8 {
            return Err(Error::Param(format!("grid needs at least 8 nodes, got {n}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::Param(format!("r_max must be positive, got {r_max}")));
        }
        Ok(Self::with_spacing(d, n, r_max / n as f64))
    }

    fn with_spacing(d: usize, n: usize, h: f64) -> Self {
        let area = sphere_area(d);
        let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|r| area * r.powi(d as i32 - 1) * h).collect();
        if d == 2 {
            weights[0] *= 11.0 / 12.0;
        }
        let mut g = Self {
            d,
            h,
            nodes,
            weights,
            faces: Vec::new(),
            lap: BandedMatrix::zeros(0, 0, 0),
            d1: BandedMatrix::zeros(0, 0, 0),
        };
        g.faces = g.build_faces();
        g.lap = g.build_laplacian();
        g.d1 = g.build_d1();
        g
    }

    /// Same layout with every radius multiplied by `mu`.
    pub fn scaled(&self, mu: f64) -> Self {
        Self::with_spacing(self.d, self.len(), self.h * mu)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn r_max(&self) -> f64 {
        self.h * self.len() as f64
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Gradient stencils (acting on f) and weights S_j of the faces r = j h.
    fn build_faces(&self) -> Vec<(Vec<(usize, f64)>, f64)> {
        let n = self.len();
        let h = self.h;
        let c = 1.0 / (24.0 * h);
        let raw = [(-2i64, c), (-1, -27.0 * c), (0, 27.0 * c), (1, -c)];
        let odd = self.d == 3;
        let first = if odd { 0 } else { 1 };
        (first..=n + 1)
            .map(|j| {
                let mut st: Vec<(usize, f64)> = Vec::with_capacity(4);
                for (o, w) in raw {
                    let i = j as i64 + o;
                    if let Some(k) = fold(i, n) {
                        // d = 3 differentiates v = r f, odd under reflection
                        let w = if odd { w * self.nodes[k] * if i < 0 { -1.0 } else { 1.0 } } else { w };
                        match st.iter_mut().find(|e| e.0 == k) {
                            Some(e) => e.1 += w,
                            None => st.push((k, w)),
                        }
                    }
                }
                let s = match self.d {
                    3 if j == 0 => 2.0 * PI * h,
                    3 => 4.0 * PI * h,
                    d => sphere_area(d) * (j as f64 * h).powi(d as i32 - 1) * h,
                };
                (st, s)
            })
            .collect()
    }

    fn build_laplacian(&self) -> BandedMatrix<f64> {
        let n = self.len();
        let mut a = BandedMatrix::zeros(n, 3, 3);
        for (st, s) in &self.faces {
            for &(p, cp) in st {
                for &(q, cq) in st {
                    a.add_to(p, q, -s * cp * cq / self.weights[p]);
                }
            }
        }
        a
    }

    fn build_d1(&self) -> BandedMatrix<f64> {
        let n = self.len();
        let c = 1.0 / (12.0 * self.h);
        let raw = [(-2i64, c), (-1, -8.0 * c), (1, 8.0 * c), (2, -c)];
        let mut a = BandedMatrix::zeros(n, 3, 2);
        for i in 0..n {
            for (o, w) in raw {
                if let Some(k) = fold(i as i64 + o, n) {
                    a.add_to(i, k, w);
                }
            }
        }
        a
    }

    /// Discrete Laplacian Δ_h (heptadiagonal).
    pub fn laplacian(&self) -> &BandedMatrix<f64> {
        &self.lap
    }

    /// Cell-centred ∂_r (fourth order, even reflection at the origin).
    pub fn d1(&self) -> &BandedMatrix<f64> {
        &self.d1
    }

    /// Λ = d/2 + r ∂_r as a banded matrix.
    pub fn lambda_op(&self) -> BandedMatrix<f64> {
        let r = &self.nodes;
        let ones = vec![1.0; self.len()];
        self.d1.scale_rows_cols(r, &ones).plus_diag(&vec![self.d as f64 / 2.0; self.len()])
    }

    /// Skew-adjoint part of Λ in the weighted inner product: ½(M - W⁻¹MᵀW), M = r∂_r.
    pub fn lambda_skew(&self) -> BandedMatrix<f64> {
        let ones = vec![1.0; self.len()];
        let m = self.d1.scale_rows_cols(&self.nodes, &ones);
        let winv: Vec<f64> = self.weights.iter().map(|w| 1.0 / w).collect();
        let mt = m.transpose().scale_rows_cols(&winv, &self.weights);
        m.add(&mt.scaled(-1.0)).scaled(0.5)
    }

    /// Discrete ‖∇f‖₂² = ⟨−Δ_h f, f⟩, summed face by face.
    pub fn grad_norm_sqr<T: super::Scalar>(&self, f: &[T]) -> f64 {
        self.faces
            .iter()
            .map(|(st, s)| {
                let mut g = T::zero();
                for &(k, c) in st {
                    g += f[k] * c;
                }
                s * g.norm_sqr()
            })
            .sum()
    }

    /// Σ w_i f(r_i).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(g: &RadialGrid, f: impl Fn(f64) -> f64, lf: impl Fn(f64) -> f64, rcut: f64) -> f64 {
        let v: Vec<f64> = g.nodes().iter().map(|&r| f(r)).collect();
        let l = g.laplacian().matvec(&v);
        g.nodes()
            .iter()
            .zip(&l)
            .filter(|(r, _)| **r < rcut)
            .map(|(r, x)| (x - lf(*r)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn weights_positive_and_nodes_increasing() {
        for d in 1..=3 {
            let g = RadialGrid::new(d, 64, 10.0).unwrap();
            assert!(g.weights().iter().all(|&w| w > 0.0));
            assert!(g.nodes().windows(2).all(|p| p[1] > p[0]));
        }
    }

    #[test]
    fn rejects_bad_dimension() {
        assert_eq!(RadialGrid::new(4, 64, 1.0).unwrap_err(), Error::Dimension(4));
    }

    #[test]
    fn exponential_quadrature_converges() {
        // ∫ e^{-r} dx = |S^{d-1}| Γ(d)
        for d in 1..=3 {
            let exact = sphere_area(d) * [1.0, 1.0, 2.0][d - 1];
            let e = |n| {
                let g = RadialGrid::new(d, n, 40.0).unwrap();
                let f: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
                (g.integrate(&f) - exact).abs()
            };
            let (e1, e2) = (e(400), e(800));
            assert!(e1 / e2 > 3.5, "d={d}: {e1} {e2}");
        }
    }

    #[test]
    fn constants_are_harmonic_inside() {
        let g = RadialGrid::new(3, 100, 10.0).unwrap();
        let l = g.laplacian().matvec(&vec![1.0; 100]);
        assert!(l[..90].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn gaussian_laplacian_d1_d3() {
        for (d, c) in [(1usize, 2.0), (2, 4.0), (3, 6.0)] {
            let f = |r: f64| (-r * r).exp();
            let lf = move |r: f64| (4.0 * r * r - c) * (-r * r).exp();
            let e1 = max_err(&RadialGrid::new(d, 200, 10.0).unwrap(), f, lf, 8.0);
            let e2 = max_err(&RadialGrid::new(d, 400, 10.0).unwrap(), f, lf, 8.0);
            assert!(e1 < 1e-3 && e1 / e2 > 3.5, "d={d} {e1} {e2}");
        }
    }

    #[test]
    fn laplacian_self_adjoint_and_energy_identity() {
        let g = RadialGrid::new(2, 50, 6.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 3.0).exp() * (1.0 + r)).collect();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
        let lf = g.laplacian().matvec(&f);
        let lu = g.laplacian().matvec(&u);
        let a: f64 = (0..50).map(|i| g.weights()[i] * lf[i] * u[i]).sum();
        let b: f64 = (0..50).map(|i| g.weights()[i] * f[i] * lu[i]).sum();
        assert!((a - b).abs() < 1e-12 * a.abs());
        let e: f64 = -(0..50).map(|i| g.weights()[i] * lf[i] * f[i]).sum::<f64>();
        assert!((e - g.grad_norm_sqr(&f)).abs() < 1e-12 * e);
    }

    #[test]
    fn lambda_skew_is_skew() {
        let g = RadialGrid::new(3, 40, 6.0).unwrap();
        let a = g.lambda_skew();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let af = a.matvec(&f);
        let q: f64 = (0..40).map(|i| g.weights()[i] * af[i] * f[i]).sum();
        assert!(q.abs() < 1e-13);
    }

    #[test]
    fn lambda_of_gaussian() {
        // Λ e^{-r²} = (d/2 - 2r²) e^{-r²}
        let g = RadialGrid::new(3, 800, 10.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let lf = g.lambda_op().matvec(&f);
        for (r, v) in g.nodes().iter().zip(&lf) {
            assert!((v - (1.5 - 2.0 * r * r) * (-r * r).exp()).abs() < 1e-6);
        }
    }
}
