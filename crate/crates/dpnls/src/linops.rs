//! The linearised operators L₊ = −Δ + 1 − (1+4/d)Q^{4/d}, L₋ = −Δ + 1 − Q^{4/d},
//! their generalised-kernel algebra and the coercivity constant.

use crate::error::{Error, Result};
use crate::groundstate::GroundState;
use crate::numcore::{BandedLu, BandedMatrix, RealField};
use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone)]
pub struct LinearizedPair {
    gs: GroundState,
    lplus: BandedMatrix<f64>,
    lminus: BandedMatrix<f64>,
    lplus_lu: BandedLu<f64>,
    lminus_pinned: BandedLu<f64>,
    pin: usize,
    rho: RealField,
    lambda_q: RealField,
    y2q: RealField,
}

/// Residuals of the four generalised-kernel identities (sup norms).
#[derive(Debug, Clone, Copy)]
pub struct AlgebraResiduals {
    /// L₋Q
    pub lminus_q: f64,
    /// L₊ΛQ + 2Q
    pub lplus_lambda_q: f64,
    /// L₋(|y|²Q) + 4ΛQ
    pub lminus_y2q: f64,
    /// L₊ρ − |y|²Q
    pub lplus_rho: f64,
}

impl AlgebraResiduals {
    pub fn max(&self) -> f64 {
        self.lminus_q.max(self.lplus_lambda_q).max(self.lminus_y2q).max(self.lplus_rho)
    }
    pub fn as_array(&self) -> [f64; 4] {
        [self.lminus_q, self.lplus_lambda_q, self.lminus_y2q, self.lplus_rho]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoercivityReport {
    /// min(mu_plus, mu_minus)
    pub mu: f64,
    /// Smallest H¹-Rayleigh quotient of L₊ on {Q, |y|²Q}^⊥.
    pub mu_plus: f64,
    /// Smallest H¹-Rayleigh quotient of L₋ on {ρ}^⊥.
    pub mu_minus: f64,
    /// Same for L₊ without constraints (negative: L₊ has a negative direction).
    pub mu_plus_free: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl LinearizedPair {
    pub fn new(gs: GroundState) -> Result<Self> {
        let grid = gs.grid().clone();
        let k = 4.0 / grid.dim() as f64;
        let q = gs.field().values();
        let neg_lap = grid.laplacian().scaled(-1.0);
        let lplus = neg_lap.plus_diag(&q.iter().map(|v| 1.0 - (1.0 + k) * v.abs().powf(k)).collect::<Vec<_>>());
        let lminus = neg_lap.plus_diag(&q.iter().map(|v| 1.0 - v.abs().powf(k)).collect::<Vec<_>>());
        let lplus_lu = lplus.factor()?;
        let mut pinned = lminus.clone();
        // pin where the kernel carries most weight: the dropped equation's residual
        // is ≈ ⟨L₋f, Q⟩/(W_i Q_i), so a small W_i (d=3 near r=0) would amplify round-off
        let pin = (0..q.len())
            .max_by(|&a, &b| (grid.weights()[a] * q[a]).total_cmp(&(grid.weights()[b] * q[b])))
            .unwrap_or(0);
        pinned.set_unit_row(pin);
        let lminus_pinned = pinned.factor()?;
        let y2q = gs.field().map_r(|r, v| r * r * v);
        let lambda_q = gs.field().lambda();
        let rho = y2q.with_values(lplus_lu.solve(y2q.values()));
        Ok(Self { gs, lplus, lminus, lplus_lu, lminus_pinned, pin, rho, lambda_q, y2q })
    }

    pub fn ground_state(&self) -> &GroundState {
        &self.gs
    }
    pub fn q(&self) -> &RealField {
        self.gs.field()
    }
    /// ρ with L₊ρ = |y|²Q.
    pub fn rho(&self) -> &RealField {
        &self.rho
    }
    pub fn lambda_q(&self) -> &RealField {
        &self.lambda_q
    }
    pub fn y2q(&self) -> &RealField {
        &self.y2q
    }
    pub fn lplus_matrix(&self) -> &BandedMatrix<f64> {
        &self.lplus
    }
    pub fn lminus_matrix(&self) -> &BandedMatrix<f64> {
        &self.lminus
    }

    pub fn apply_lplus(&self, f: &RealField) -> Result<RealField> {
        f.same_grid(self.q())?;
        Ok(f.with_values(self.lplus.matvec(f.values())))
    }

    pub fn apply_lminus(&self, f: &RealField) -> Result<RealField> {
        f.same_grid(self.q())?;
        Ok(f.with_values(self.lminus.matvec(f.values())))
    }

    /// L₊f = g (L₊ is invertible on radial functions).
    pub fn solve_lplus(&self, g: &RealField) -> Result<RealField> {
        g.same_grid(self.q())?;
        let f = g.with_values(self.lplus_lu.solve(g.values()));
        let r = sup(&self.lplus.matvec(f.values()).iter().zip(g.values()).map(|(a, b)| a - b).collect::<Vec<_>>());
        if r > 1e-8 * sup(g.values()).max(1.0) {
            return Err(Error::Residual(r));
        }
        Ok(f)
    }

    /// L₋f = g with the gauge ⟨f, Q⟩ = 0; requires ⟨g, Q⟩ ≈ 0.
    pub fn solve_lminus(&self, g: &RealField) -> Result<RealField> {
        g.same_grid(self.q())?;
        let q = self.q();
        let gq = g.inner_unchecked(q);
        let allowed = 1e-8 * g.norm() * q.norm();
        if gq.abs() > allowed {
            return Err(Error::Solvability { inner: gq, allowed });
        }
        let qq = q.norm_sqr();
        // deflate the kernel direction from the data, pin one value, then re-gauge
        let mut rhs: Vec<f64> = g.values().iter().zip(q.values()).map(|(a, b)| a - gq / qq * b).collect();
        rhs[self.pin] = 0.0;
        let f = g.with_values(self.lminus_pinned.solve(&rhs));
        let c = f.inner_unchecked(q) / qq;
        Ok(f.axpy(-c, q))
    }

    pub fn algebra_residuals(&self) -> AlgebraResiduals {
        let q = self.q();
        let lp = |f: &RealField| self.lplus.matvec(f.values());
        let lm = |f: &RealField| self.lminus.matvec(f.values());
        let comb = |a: Vec<f64>, c: f64, b: &RealField| sup(&a.iter().zip(b.values()).map(|(x, y)| x + c * y).collect::<Vec<_>>());
        AlgebraResiduals {
            lminus_q: sup(&lm(q)),
            lplus_lambda_q: comb(lp(&self.lambda_q), 2.0, q),
            lminus_y2q: comb(lm(&self.y2q), 4.0, &self.lambda_q),
            lplus_rho: comb(lp(&self.rho), -1.0, &self.y2q),
        }
    }

    /// ⟨L₊ε₁,ε₁⟩ + ⟨L₋ε₂,ε₂⟩ − μ‖ε‖²_{H¹} + μ⁻¹(⟨ε₁,Q⟩² + ⟨ε₁,|y|²Q⟩² + ⟨ε₂,ρ⟩²);
    /// the penalised coercivity inequality holds for ε when this is ≥ 0.
    pub fn penalized_margin(&self, e1: &RealField, e2: &RealField, mu: f64) -> Result<f64> {
        let a = self.apply_lplus(e1)?.inner_unchecked(e1) + self.apply_lminus(e2)?.inner_unchecked(e2);
        let h1 = e1.h1_norm_sqr() + e2.h1_norm_sqr();
        let pen = e1.inner_unchecked(self.q()).powi(2) + e1.inner_unchecked(&self.y2q).powi(2) + e2.inner_unchecked(&self.rho).powi(2);
        Ok(a - mu * h1 + pen / mu)
    }

    /// Constrained coercivity constants via Lanczos on M⁻¹V in the H¹ metric, M = −Δ + 1.
    pub fn coercivity_mu(&self) -> Result<CoercivityReport> {
        let k = 4.0 / self.gs.dim() as f64;
        let q = self.q().values();
        let vp: Vec<f64> = q.iter().map(|v| (1.0 + k) * v.abs().powf(k)).collect();
        let vm: Vec<f64> = q.iter().map(|v| v.abs().powf(k)).collect();
        let mu_plus = 1.0 - self.largest_ratio(&vp, &[self.q().values(), self.y2q.values()])?;
        let mu_minus = 1.0 - self.largest_ratio(&vm, &[self.rho.values()])?;
        let mu_plus_free = 1.0 - self.largest_ratio(&vp, &[])?;
        Ok(CoercivityReport { mu: mu_plus.min(mu_minus), mu_plus, mu_minus, mu_plus_free })
    }

    /// max ⟨Vε,ε⟩/⟨Mε,ε⟩ over ε with ⟨ε, c⟩ = 0 for every constraint c.
    fn largest_ratio(&self, v: &[f64], constraints: &[&[f64]]) -> Result<f64> {
        let grid = self.gs.grid();
        let w = grid.weights();
        let n = v.len();
        let m = crate::numcore::helmholtz(grid, 1.0);
        let m_lu = m.factor()?;
        let minner = |a: &[f64], b: &[f64]| -> f64 {
            let ma = m.matvec(a);
            ma.iter().zip(b).zip(w).map(|((x, y), ww)| x * y * ww).sum()
        };
        // in the M-metric the L² constraint ⟨ε,c⟩ = 0 reads ⟨ε, M⁻¹c⟩_M = 0
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for c in constraints {
            let mut chat = m_lu.solve(c);
            for b in &basis {
                let s = minner(&chat, b);
                chat.iter_mut().zip(b).for_each(|(x, y)| *x -= s * y);
            }
            let nrm = minner(&chat, &chat).sqrt();
            chat.iter_mut().for_each(|x| *x /= nrm);
            basis.push(chat);
        }
        let project = |x: &mut Vec<f64>, basis: &[Vec<f64>]| {
            for _ in 0..2 {
                for b in basis {
                    let s = minner(x, b);
                    x.iter_mut().zip(b).for_each(|(p, y)| *p -= s * y);
                }
            }
        };
        let op = |x: &[f64]| -> Vec<f64> {
            let vx: Vec<f64> = x.iter().zip(v).map(|(a, b)| a * b).collect();
            m_lu.solve(&vx)
        };
        let nodes = grid.nodes();
        let mut x: Vec<f64> = (0..n).map(|i| (1.0 + 0.3 * nodes[i] + 0.05 * nodes[i] * nodes[i]) * (-0.5 * nodes[i]).exp()).collect();
        project(&mut x, &basis);
        let nrm = minner(&x, &x).sqrt();
        x.iter_mut().for_each(|a| *a /= nrm);
        let mut lanczos: Vec<Vec<f64>> = vec![x];
        let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        let mut prev = f64::NAN;
        for it in 0..300 {
            let xk = lanczos[it].clone();
            let mut y = op(&xk);
            project(&mut y, &basis);
            let a = minner(&y, &xk);
            alpha.push(a);
            // full reorthogonalisation (twice is enough)
            for _ in 0..2 {
                for l in &lanczos {
                    let s = minner(&y, l);
                    y.iter_mut().zip(l).for_each(|(p, q)| *p -= s * q);
                }
            }
            let b = minner(&y, &y).max(0.0).sqrt();
            let kdim = alpha.len();
            let mut t = DMatrix::<f64>::zeros(kdim, kdim);
            for i in 0..kdim {
                t[(i, i)] = alpha[i];
                if i + 1 < kdim {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (imax, &top) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty");
            let resid = (b * eig.eigenvectors[(kdim - 1, imax)]).abs();
            if resid < 1e-11 * top.abs().max(1e-3) || (it > 5 && (top - prev).abs() < 1e-14) || b < 1e-14 {
                return Ok(top);
            }
            prev = top;
            beta.push(b);
            y.iter_mut().for_each(|p| *p /= b);
            lanczos.push(y);
        }
        Err(Error::Eigen(format!("Lanczos stalled, last estimate {prev}")))
    }

    /// Dense eigenvalues of the W-symmetrised L₊ (small grids only).
    pub fn dense_lplus_spectrum(&self) -> Vec<f64> {
        let n = self.lplus.n();
        let w = self.gs.grid().weights();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in self.lplus.row_range(i) {
                a[(i, j)] = w[i].sqrt() * self.lplus.get(i, j) / w[j].sqrt();
            }
        }
        let sym = (&a + a.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}
