//! Six-point Lagrange interpolation between radial grids.

use super::grid::{fold, RadialGrid};
use super::scalar::Scalar;

/// Precomputed weights for sampling fields of one grid at a list of radii.
#[derive(Debug, Clone)]
pub struct InterpPlan {
    n_src: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl InterpPlan {
    pub fn new(src: &RadialGrid, points: &[f64]) -> Self {
        let h = src.h();
        let n = src.len();
        let rows = points
            .iter()
            .map(|&r| {
                let r = r.abs();
                let xi = r / h - 0.5;
                let base = xi.floor() as i64 - 2;
                if base > n as i64 + 2 {
                    return Vec::new();
                }
                let t = xi - base as f64;
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(6);
                for a in 0..6i64 {
                    let mut w = 1.0;
                    for b in 0..6i64 {
                        if b != a {
                            w *= (t - b as f64) / (a - b) as f64;
                        }
                    }
                    if let Some(k) = fold(base + a, n) {
                        match row.iter_mut().find(|e| e.0 == k) {
                            Some(e) => e.1 += w,
                            None => row.push((k, w)),
                        }
                    }
                }
                row
            })
            .collect();
        Self { n_src: n, rows }
    }

    pub fn apply<T: Scalar>(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.n_src);
        self.rows
            .iter()
            .map(|row| {
                let mut acc = T::zero();
                for &(k, w) in row {
                    acc += f[k] * w;
                }
                acc
            })
            .collect()
    }
}
