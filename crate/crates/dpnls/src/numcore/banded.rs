//! Banded matrices and an LU factorisation with partial pivoting.

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        for i in 0..n {
            m.set(i, i, T::from_real(1.0));
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn kl(&self) -> usize {
        self.kl
    }
    pub fn ku(&self) -> usize {
        self.ku
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            T::zero()
        }
    }

    /// Panics when (i, j) is outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Columns of row `i` that lie inside the band.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        let w = self.kl + self.ku + 1;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = T::zero();
            for j in self.row_range(i) {
                acc += row[j + self.kl - i] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Copy into a matrix of another scalar type through `f`.
    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> BandedMatrix<U> {
        BandedMatrix { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v = *v * a);
        m
    }

    /// self + diag(diag)
    pub fn plus_diag(&self, diag: &[T]) -> Self {
        assert_eq!(diag.len(), self.n);
        let mut m = self.clone();
        for (i, &v) in diag.iter().enumerate() {
            m.add_to(i, i, v);
        }
        m
    }

    /// Entry-wise sum; bands are widened as needed.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = Self::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        for src in [self, other] {
            for i in 0..self.n {
                for j in src.row_range(i) {
                    m.add_to(i, j, src.get(i, j));
                }
            }
        }
        m
    }

    /// Product diag(left) * self * diag(right).
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            for j in self.row_range(i) {
                let k = m.idx(i, j);
                m.data[k] = m.data[k] * (left[i] * right[j]);
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                m.set(j, i, self.get(i, j));
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// Overwrite row `i` with the unit row e_i.
    pub fn set_unit_row(&mut self, i: usize) {
        for j in self.row_range(i) {
            self.set(i, j, T::zero());
        }
        self.set(i, i, T::from_real(1.0));
    }

    pub fn factor(&self) -> Result<BandedLu<T>> {
        BandedLu::new(self)
    }

    /// Factor and solve, checking the normwise backward error.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let x = self.factor()?.solve(rhs);
        let (rn, bn) = self.residual_norms(&x, rhs);
        let xn = x.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        let scale = self.max_abs() * (self.kl + self.ku + 1) as f64 * xn + bn;
        if scale > 0.0 && rn / scale > 1e-12 {
            return Err(Error::Residual(rn / scale));
        }
        Ok(x)
    }

    /// (‖Ax − b‖∞, ‖b‖∞)
    pub fn residual_norms(&self, x: &[T], rhs: &[T]) -> (f64, f64) {
        let r = self.matvec(x);
        let bn = rhs.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        let rn = r.iter().zip(rhs).map(|(a, b)| (*a - *b).modulus()).fold(0.0, f64::max);
        (rn, bn)
    }
}

impl BandedMatrix<f64> {
    /// Real matrix applied to a real or complex vector.
    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let w = self.kl + self.ku + 1;
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * w..(i + 1) * w];
                let mut acc = T::zero();
                for j in self.row_range(i) {
                    acc += x[j] * row[j + self.kl - i];
                }
                acc
            })
            .collect()
    }
}

/// LU factors of a banded matrix (row pivoting, fill-in up to `kl + ku` superdiagonals).
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    // U rows: row k stores columns k..=k+ku+kl
    u: Vec<T>,
    uw: usize,
    // multipliers: l[k*kl + m] eliminates row k+1+m
    l: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn new(a: &BandedMatrix<T>) -> Result<Self> {
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        // working rows: position p covers columns p-kl ..= p+ku+kl
        let w = 2 * kl + ku + 1;
        let mut rows = vec![T::zero(); n * w];
        let off = |p: usize, j: usize| j + kl - p;
        for i in 0..n {
            for j in a.row_range(i) {
                rows[i * w + off(i, j)] = a.get(i, j);
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut l = vec![T::zero(); n * kl.max(1)];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut best = k;
            let mut bv = rows[k * w + off(k, k)].modulus();
            for q in k + 1..=last {
                let v = rows[q * w + off(q, k)].modulus();
                if v > bv {
                    bv = v;
                    best = q;
                }
            }
            if bv <= 1e-14 * scale {
                return Err(Error::Singular { row: k, value: bv });
            }
            piv[k] = best;
            let hi = (k + ku + kl).min(n - 1);
            if best != k {
                for j in k..=hi {
                    let a_ = k * w + off(k, j);
                    let b_ = best * w + off(best, j);
                    rows.swap(a_, b_);
                }
            }
            let pv = rows[k * w + off(k, k)];
            for q in k + 1..=last {
                let m = rows[q * w + off(q, k)] / pv;
                l[k * kl + (q - k - 1)] = m;
                if m == T::zero() {
                    continue;
                }
                rows[q * w + off(q, k)] = T::zero();
                for j in k + 1..=hi {
                    let v = rows[k * w + off(k, j)];
                    rows[q * w + off(q, j)] -= m * v;
                }
            }
        }
        let uw = ku + kl + 1;
        let mut u = vec![T::zero(); n * uw];
        for k in 0..n {
            for c in 0..uw {
                let j = k + c;
                if j < n {
                    u[k * uw + c] = rows[k * w + off(k, j)];
                }
            }
        }
        Ok(Self { n, kl, u, uw, l, piv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        let kl = self.kl;
        for k in 0..n {
            if self.piv[k] != k {
                x.swap(k, self.piv[k]);
            }
            let xk = x[k];
            let last = (k + kl).min(n - 1);
            for q in k + 1..=last {
                x[q] -= self.l[k * kl + (q - k - 1)] * xk;
            }
        }
        for k in (0..n).rev() {
            let row = &self.u[k * self.uw..(k + 1) * self.uw];
            let mut acc = x[k];
            for c in 1..self.uw {
                let j = k + c;
                if j >= n {
                    break;
                }
                acc -= row[c] * x[j];
            }
            x[k] = acc / row[0];
        }
    }
}
