//! Truncated bivariate power series in (b, μ), μ = λ^α, with b of weight 1 and
//! μ of weight 2. Only monomials b^m μ^n with m + 2n ≤ cap are kept.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct SeriesSpace {
    cap: usize,
    mons: Vec<(usize, usize)>,
    idx: Vec<Vec<Option<usize>>>,
    table: Vec<(usize, usize, usize)>,
}

pub type Coeffs = Vec<Complex64>;

impl SeriesSpace {
    pub fn new(cap: usize) -> Self {
        let mut mons = Vec::new();
        let mut idx = vec![vec![None; cap / 2 + 1]; cap + 1];
        for n in 0..=cap / 2 {
            for m in 0..=cap - 2 * n {
                idx[m][n] = Some(mons.len());
                mons.push((m, n));
            }
        }
        let mut table = Vec::new();
        for (a, &(ma, na)) in mons.iter().enumerate() {
            for (b, &(mb, nb)) in mons.iter().enumerate() {
                if ma + mb + 2 * (na + nb) <= cap {
                    table.push((a, b, idx[ma + mb][na + nb].expect("within cap")));
                }
            }
        }
        Self { cap, mons, idx, table }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
    pub fn len(&self) -> usize {
        self.mons.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mons.is_empty()
    }
    pub fn monomials(&self) -> &[(usize, usize)] {
        &self.mons
    }

    /// Position of b^m μ^n, if kept.
    pub fn index(&self, m: usize, n: usize) -> Option<usize> {
        self.idx.get(m).and_then(|row| row.get(n).copied().flatten())
    }

    pub fn zero(&self) -> Coeffs {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    pub fn mul(&self, a: &[Complex64], b: &[Complex64]) -> Coeffs {
        let mut out = self.zero();
        for &(i, j, k) in &self.table {
            out[k] += a[i] * b[j];
        }
        out
    }

    /// (1 + ζ)^e for ζ without constant term.
    pub fn binomial(&self, zeta: &[Complex64], e: f64) -> Coeffs {
        let mut out = self.zero();
        out[0] = Complex64::new(1.0, 0.0);
        let mut power = out.clone();
        let mut c = 1.0;
        for k in 1..=self.cap {
            power = self.mul(&power, zeta);
            if power.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                break;
            }
            c *= (e - (k - 1) as f64) / k as f64;
            if c == 0.0 {
                break;
            }
            for (o, p) in out.iter_mut().zip(&power) {
                *o += p * c;
            }
        }
        out
    }

    /// Evaluate at (b, μ).
    pub fn eval(&self, a: &[Complex64], b: f64, mu: f64) -> Complex64 {
        self.mons.iter().zip(a).map(|(&(m, n), c)| c * b.powi(m as i32) * mu.powi(n as i32)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn counts_and_products() {
        let s = SeriesSpace::new(7);
        assert_eq!(s.len(), 8 + 6 + 4 + 2);
        // (1 + b)(1 + μ) = 1 + b + μ + bμ
        let mut a = s.zero();
        a[0] = c(1.0);
        a[s.index(1, 0).unwrap()] = c(1.0);
        let mut b = s.zero();
        b[0] = c(1.0);
        b[s.index(0, 1).unwrap()] = c(1.0);
        let p = s.mul(&a, &b);
        assert_eq!(p[s.index(1, 1).unwrap()], c(1.0));
        assert!((s.eval(&p, 0.1, 0.2) - c(1.1 * 1.2)).norm() < 1e-15);
    }

    #[test]
    fn binomial_matches_powf() {
        let s = SeriesSpace::new(9);
        let mut z = s.zero();
        z[s.index(0, 1).unwrap()] = Complex64::new(0.3, 0.1);
        z[s.index(1, 1).unwrap()] = Complex64::new(0.0, -0.2);
        let e = 1.7;
        let ser = s.binomial(&z, e);
        let (b, mu) = (0.05, 0.01);
        let exact = (c(1.0) + s.eval(&z, b, mu)).powf(e);
        // truncation error ~ weight 10 ≈ μ^5
        assert!((s.eval(&ser, b, mu) - exact).norm() < 1e-9);
    }
}
