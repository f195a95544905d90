//! The blow-up profile
//!
//!   P̃ = Q + Σ_{j+k≤K} b^{2j} λ^{(k+1)α} P⁺_{j,k} + i Σ b^{2j+1} λ^{(k+1)α} P⁻_{j,k},
//!   θ̃ = Σ β_{j,k} b^{2j} λ^{(k+1)α},
//!
//! built by solving the triangular family of linear systems
//!   L₊P⁺_{j,k} = F⁺_{j,k} + ¼β_{j,k}|y|²Q,   L₋P⁻_{j,k} = F⁻_{j,k} − ((k+1)α+2j) P⁺_{j,k}
//! where F^± collect every monomial produced by the already-known coefficients.
//! The source terms are found mechanically: the profile equation is expanded as a
//! truncated series in (b, μ = λ^α) node by node (see [`series`]) and the
//! coefficient of b^{2j}μ^{k+1} (real part) or b^{2j+1}μ^{k+1} (imaginary part)
//! is read off with the unknown pair set to zero.

pub mod series;

use crate::error::{Error, Result};
use crate::linops::LinearizedPair;
use crate::model::{self, Model};
use crate::numcore::csv::{fmt17, row};
use crate::numcore::{line_fit, ComplexField, LineFit, RadialGrid, RealField};
use num_complex::Complex64;
use series::{Coeffs, SeriesSpace};
use std::path::Path;
use std::sync::Arc;

/// One solved pair (j, k).
#[derive(Debug, Clone)]
pub struct ProfileTerm {
    pub j: usize,
    pub k: usize,
    pub pp: RealField,
    pub pm: RealField,
    pub beta: f64,
}

impl ProfileTerm {
    /// power of μ = λ^α
    fn mu_pow(&self) -> i32 {
        self.k as i32 + 1
    }
}

#[derive(Debug, Clone)]
pub struct ProfileCoeffs {
    model: Model,
    order: Option<usize>,
    pair: Arc<LinearizedPair>,
    terms: Vec<ProfileTerm>,
}

/// Ψ along the law: weights w = b² + λ^α, the weighted sups and norms, and the log-log fit.
#[derive(Debug, Clone)]
pub struct ResidualScaling {
    pub w: Vec<f64>,
    pub sup: Vec<f64>,
    pub norm: Vec<f64>,
    pub fit: LineFit,
}

/// Σ_K = {(j,k): j+k ≤ K} in the order the systems are solved (k outer, j inner).
pub fn sigma_k(order: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..=order {
        for j in 0..=order - k {
            out.push((j, k));
        }
    }
    out
}

/// Snapshot of the profile at one (b, λ).
#[derive(Debug, Clone)]
pub struct ProfileEval {
    pub b: f64,
    pub lambda: f64,
    /// P̃(·; b, λ)
    pub p: ComplexField,
    /// P̃ e^{−ib|y|²/4}
    pub pb: ComplexField,
    pub theta: f64,
    /// Residual with the rates of the reduced law (λ_s/λ = −b, b_s = θ − b²).
    pub psi: ComplexField,
    pub psi_weighted_norm: f64,
}

/// Ψ and its two weighted sup norms.
#[derive(Debug, Clone)]
pub struct Residual {
    pub psi: ComplexField,
    /// sup e^{r/2}(|Ψ| + |∂_rΨ|)
    pub weighted_norm: f64,
    /// sup e^{r/2}|Ψ|
    pub weighted_sup: f64,
}

/// Sup residuals of one solved system.
#[derive(Debug, Clone, Copy)]
pub struct SystemResidual {
    pub j: usize,
    pub k: usize,
    pub plus: f64,
    pub minus: f64,
    /// ⟨F⁻ − cP⁺, Q⟩, the solvability defect
    pub solvability: f64,
}

const Q_FLOOR: f64 = 1e-200;

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl ProfileCoeffs {
    /// P = Q, θ = 0.
    pub fn trivial(model: Model, pair: Arc<LinearizedPair>) -> Result<Self> {
        check_pair(&model, &pair)?;
        Ok(Self { model, order: None, pair, terms: Vec::new() })
    }

    pub fn model(&self) -> Model {
        self.model
    }
    /// None for the trivial profile.
    pub fn order(&self) -> Option<usize> {
        self.order
    }
    pub fn pair(&self) -> &Arc<LinearizedPair> {
        &self.pair
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.pair.q().grid()
    }
    pub fn q(&self) -> &RealField {
        self.pair.q()
    }
    pub fn rho(&self) -> &RealField {
        self.pair.rho()
    }
    pub fn terms(&self) -> &[ProfileTerm] {
        &self.terms
    }
    pub fn term(&self, j: usize, k: usize) -> Option<&ProfileTerm> {
        self.terms.iter().find(|t| t.j == j && t.k == k)
    }
    /// β_{0,0}, or 0 for the trivial profile.
    pub fn beta(&self) -> f64 {
        self.term(0, 0).map_or(0.0, |t| t.beta)
    }

    /// θ̃(b, λ).
    pub fn theta(&self, b: f64, lambda: f64) -> f64 {
        let mu = lambda.powf(self.model.alpha());
        self.terms.iter().map(|t| t.beta * b.powi(2 * t.j as i32) * mu.powi(t.mu_pow())).sum()
    }

    /// (P, ∂_bP, λ∂_λP) at (b, λ).
    pub fn derivatives(&self, b: f64, lambda: f64) -> (ComplexField, ComplexField, ComplexField) {
        let alpha = self.model.alpha();
        let mu = lambda.powf(alpha);
        let q = self.q();
        let n = q.len();
        let mut p: Vec<Complex64> = q.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        let mut pb = vec![czero(); n];
        let mut pl = vec![czero(); n];
        for t in &self.terms {
            let (j, m) = (2 * t.j as i32, t.mu_pow());
            let mum = mu.powi(m);
            let even = b.powi(j) * mum;
            let odd = b.powi(j + 1) * mum;
            let d_even = if j > 0 { j as f64 * b.powi(j - 1) * mum } else { 0.0 };
            let d_odd = (j + 1) as f64 * b.powi(j) * mum;
            let lam = alpha * m as f64;
            for i in 0..n {
                let z_even = Complex64::new(t.pp.values()[i], 0.0);
                let z_odd = Complex64::new(0.0, t.pm.values()[i]);
                p[i] += z_even * even + z_odd * odd;
                pb[i] += z_even * d_even + z_odd * d_odd;
                pl[i] += (z_even * even + z_odd * odd) * lam;
            }
        }
        let g = q.grid().clone();
        (
            ComplexField::new(g.clone(), p).expect("same grid"),
            ComplexField::new(g.clone(), pb).expect("same grid"),
            ComplexField::new(g, pl).expect("same grid"),
        )
    }

    /// P̃(·; b, λ).
    pub fn profile(&self, b: f64, lambda: f64) -> ComplexField {
        self.derivatives(b, lambda).0
    }

    /// P_b = P̃ e^{−ib|y|²/4}.
    pub fn profile_b(&self, b: f64, lambda: f64) -> ComplexField {
        self.profile(b, lambda).map_r(|r, v| v * Complex64::from_polar(1.0, -b * r * r / 4.0))
    }

    /// Ψ = i(∂_bP b_s + λ∂_λP λ_s/λ) + ΔP − P + f(P) + λ^α g(P) + θ|y|²P/4.
    pub fn residual_psi(&self, b: f64, lambda: f64, ls: f64, bs: f64) -> Residual {
        let (p, db, dl) = self.derivatives(b, lambda);
        let mu = lambda.powf(self.model.alpha());
        let theta = self.theta(b, lambda);
        let (d, pp) = (self.model.d, self.model.p);
        let lap = p.laplacian();
        let i = Complex64::new(0.0, 1.0);
        let vals: Vec<Complex64> = (0..p.len())
            .map(|n| {
                let r = p.grid().nodes()[n];
                let v = p.values()[n];
                i * (db.values()[n] * bs + dl.values()[n] * ls) + lap.values()[n] - v
                    + model::f_crit(d, v)
                    + model::g_pow(pp, v) * mu
                    + v * (theta * r * r / 4.0)
            })
            .collect();
        let psi = p.with_values(vals);
        let dpsi = psi.dr();
        let q = self.q().values();
        let (mut wn, mut ws) = (0.0f64, 0.0f64);
        for n in 0..psi.len() {
            if q[n] < 1e-12 {
                continue;
            }
            let w = (psi.grid().nodes()[n] / 2.0).exp();
            ws = ws.max(w * psi.values()[n].norm());
            wn = wn.max(w * (psi.values()[n].norm() + dpsi.values()[n].norm()));
        }
        Residual { psi, weighted_norm: wn, weighted_sup: ws }
    }

    /// Full snapshot with the reduced-law rates.
    pub fn eval_profile(&self, b: f64, lambda: f64) -> ProfileEval {
        let theta = self.theta(b, lambda);
        let res = self.residual_psi(b, lambda, -b, theta - b * b);
        ProfileEval {
            b,
            lambda,
            p: self.profile(b, lambda),
            pb: self.profile_b(b, lambda),
            theta,
            psi: res.psi,
            psi_weighted_norm: res.weighted_norm,
        }
    }

    /// E(λ^{−d/2}P_b(x/λ)e^{iγ}), by quadrature in the y variable:
    /// λ^{−2}[½‖∇P_b‖² − ∫F(P_b) − λ^α∫G(P_b)].
    pub fn profile_energy(&self, b: f64, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Param(format!("profile energy needs λ > 0, got {lambda}")));
        }
        let pb = self.profile_b(b, lambda);
        let mu = lambda.powf(self.model.alpha());
        Ok(model::energy(&self.model, mu, &pb) / (lambda * lambda))
    }

    /// d/ds ∫|P_b|² = 2⟨Ψ, iP⟩ for the supplied rates.
    pub fn profile_mass_drift(&self, b: f64, lambda: f64, ls: f64, bs: f64) -> f64 {
        let res = self.residual_psi(b, lambda, ls, bs);
        let p = self.profile(b, lambda);
        2.0 * res.psi.inner_unchecked(&p.times_i())
    }

    /// b on the C₀ = 0 branch of the two-term law: b² = (2β/(2−α))λ^α.
    pub fn b_on_law(&self, lambda: f64) -> f64 {
        let a = self.model.alpha();
        (2.0 * self.beta() / (2.0 - a) * lambda.powf(a)).sqrt()
    }

    /// Residual along the law with reduced-law rates: log sup e^{|y|/2}|Ψ| against
    /// log(b² + λ^α) at the given λ.
    pub fn residual_scaling(&self, lambdas: &[f64]) -> Result<ResidualScaling> {
        let a = self.model.alpha();
        let (mut w, mut sup, mut norm) = (vec![], vec![], vec![]);
        for &lam in lambdas {
            let b = self.b_on_law(lam);
            let th = self.theta(b, lam);
            let r = self.residual_psi(b, lam, -b, th - b * b);
            w.push(b * b + lam.powf(a));
            sup.push(r.weighted_sup);
            norm.push(r.weighted_norm);
        }
        let lx: Vec<f64> = w.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = sup.iter().map(|v| v.ln()).collect();
        let fit = line_fit(&lx, &ly)?;
        Ok(ResidualScaling { w, sup, norm, fit })
    }

    /// max over coefficients of |P(r*)| / ((1 + r*^κ) Q(r*)) at r* ≈ R/2.
    pub fn decay_ratio(&self, kappa: f64) -> f64 {
        let g = self.grid();
        let i = g.len() / 2;
        let r = g.nodes()[i];
        let qv = self.q().values()[i];
        self.terms
            .iter()
            .map(|t| t.pp.values()[i].abs().max(t.pm.values()[i].abs()) / ((1.0 + r.powf(kappa)) * qv))
            .fold(0.0, f64::max)
    }

    /// Sup residuals of every system (S_{j,k}), recomputed from the stored coefficients.
    pub fn system_residuals(&self) -> Result<Vec<SystemResidual>> {
        let Some(order) = self.order else { return Ok(Vec::new()) };
        let space = SeriesSpace::new(2 * order + 3);
        let psi = psi_series(&self.model, &self.pair, &self.terms, &space);
        let alpha = self.model.alpha();
        let q = self.q();
        let mut out = Vec::new();
        for t in &self.terms {
            let (fp, fm) = sources(&psi, &space, t.j, t.k, q);
            let c = (t.k + 1) as f64 * alpha + 2.0 * t.j as f64;
            // with the pair's own contribution removed, F± are the "known" parts
            let fp = fp.add(&self.pair.apply_lplus(&t.pp)?).axpy(-0.25 * t.beta, self.pair.y2q());
            let fm = fm.add(&self.pair.apply_lminus(&t.pm)?).axpy(c, &t.pp);
            let rp = self.pair.apply_lplus(&t.pp)?.sub(&fp).axpy(-0.25 * t.beta, self.pair.y2q());
            let rm = self.pair.apply_lminus(&t.pm)?.sub(&fm).axpy(c, &t.pp);
            out.push(SystemResidual {
                j: t.j,
                k: t.k,
                plus: rp.sup(),
                minus: rm.sup(),
                solvability: fm.axpy(-c, &t.pp).inner_unchecked(q),
            });
        }
        Ok(out)
    }

    /// Manifest `j,k,beta` plus one `P_j_k.csv` (`r,pp,pm`) per pair.
    pub fn write_archive(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::from("j,k,beta\n");
        for t in &self.terms {
            manifest.push_str(&format!("{},{},{}\n", t.j, t.k, fmt17(t.beta)));
            let mut s = String::from("r,pp,pm\n");
            for ((r, a), b) in self.grid().nodes().iter().zip(t.pp.values()).zip(t.pm.values()) {
                s.push_str(&row(&[*r, *a, *b]));
                s.push('\n');
            }
            std::fs::write(dir.join(format!("P_{}_{}.csv", t.j, t.k)), s)?;
        }
        std::fs::write(dir.join("profile_manifest.csv"), manifest)
    }

    /// Inverse of [`write_archive`]; the nodes must match the pair's grid.
    pub fn read_archive(model: Model, pair: Arc<LinearizedPair>, dir: &Path) -> Result<Self> {
        check_pair(&model, &pair)?;
        let io = |e: std::io::Error| Error::Param(format!("archive: {e}"));
        let bad = |s: &str| Error::Param(format!("archive: malformed {s}"));
        let manifest = std::fs::read_to_string(dir.join("profile_manifest.csv")).map_err(io)?;
        let grid = pair.q().grid().clone();
        let mut terms = Vec::new();
        for line in manifest.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(line));
            }
            let j: usize = f[0].parse().map_err(|_| bad(line))?;
            let k: usize = f[1].parse().map_err(|_| bad(line))?;
            let beta: f64 = f[2].parse().map_err(|_| bad(line))?;
            let body = std::fs::read_to_string(dir.join(format!("P_{j}_{k}.csv"))).map_err(io)?;
            let (mut pp, mut pm) = (Vec::new(), Vec::new());
            for (i, l) in body.lines().skip(1).enumerate() {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().map_err(|_| bad(l))).collect::<Result<_>>()?;
                if v.len() != 3 || i >= grid.len() || (v[0] - grid.nodes()[i]).abs() > 1e-12 * (1.0 + v[0]) {
                    return Err(Error::GridMismatch);
                }
                pp.push(v[1]);
                pm.push(v[2]);
            }
            terms.push(ProfileTerm {
                j,
                k,
                pp: RealField::new(grid.clone(), pp)?,
                pm: RealField::new(grid.clone(), pm)?,
                beta,
            });
        }
        let order = terms.iter().map(|t| t.j + t.k).max();
        if let Some(o) = order {
            if terms.len() != sigma_k(o).len() {
                return Err(bad("index set"));
            }
        }
        Ok(Self { model, order, pair, terms })
    }
}

fn check_pair(model: &Model, pair: &LinearizedPair) -> Result<()> {
    if pair.ground_state().dim() != model.d {
        return Err(Error::Param(format!(
            "model d={} but ground state d={}",
            model.d,
            pair.ground_state().dim()
        )));
    }
    Ok(())
}

/// Solve (S_{j,k}) for all (j,k) ∈ Σ_K.
pub fn build_profile(order: usize, model: Model, pair: Arc<LinearizedPair>) -> Result<ProfileCoeffs> {
    check_pair(&model, &pair)?;
    if order < 1 {
        return Err(Error::Param("profile order K must be ≥ 1".into()));
    }
    let space = SeriesSpace::new(2 * order + 3);
    let alpha = model.alpha();
    let q = pair.q().clone();
    let rho = pair.rho().clone();
    let rho_q = rho.inner_unchecked(&q);
    let mut terms: Vec<ProfileTerm> = Vec::new();
    for (j, k) in sigma_k(order) {
        let fail = |reason: String| Error::Profile { j, k, reason };
        let psi = psi_series(&model, &pair, &terms, &space);
        let (fp, fm) = sources(&psi, &space, j, k, &q);
        let a = pair.solve_lplus(&fp).map_err(|e| fail(e.to_string()))?;
        let c = (k + 1) as f64 * alpha + 2.0 * j as f64;
        let beta = 4.0 * (fm.inner_unchecked(&q) - c * a.inner_unchecked(&q)) / (c * rho_q);
        if !beta.is_finite() {
            return Err(fail("non-finite β".into()));
        }
        let pp = a.axpy(beta / 4.0, &rho);
        let pm = pair.solve_lminus(&fm.axpy(-c, &pp)).map_err(|e| fail(e.to_string()))?;
        terms.push(ProfileTerm { j, k, pp, pm, beta });
    }
    Ok(ProfileCoeffs { model, order: Some(order), pair, terms })
}

/// Re[b^{2j}μ^{k+1}] and Im[b^{2j+1}μ^{k+1}] coefficients of the Ψ series.
fn sources(psi: &[Vec<Complex64>], space: &SeriesSpace, j: usize, k: usize, q: &RealField) -> (RealField, RealField) {
    let ie = space.index(2 * j, k + 1).expect("even monomial within cap");
    let io = space.index(2 * j + 1, k + 1).expect("odd monomial within cap");
    (q.with_values(psi[ie].iter().map(|v| v.re).collect()), q.with_values(psi[io].iter().map(|v| v.im).collect()))
}

/// Series of Ψ with the reduced-law rates, indexed [monomial][node].
fn psi_series(model: &Model, pair: &LinearizedPair, terms: &[ProfileTerm], space: &SeriesSpace) -> Vec<Vec<Complex64>> {
    let q = pair.q();
    let grid = q.grid();
    let n = q.len();
    let len = space.len();
    let alpha = model.alpha();
    let qexp = 4.0 / model.d as f64;
    let pexp = model.p;
    let i_unit = Complex64::new(0.0, 1.0);

    // coefficient fields of P, [monomial][node]
    let mut pser = vec![vec![czero(); n]; len];
    for (v, qv) in pser[0].iter_mut().zip(q.values()) {
        *v = Complex64::new(*qv, 0.0);
    }
    let mut theta = space.zero();
    for t in terms {
        let ie = space.index(2 * t.j, t.k + 1);
        let io = space.index(2 * t.j + 1, t.k + 1);
        if let Some(ie) = ie {
            for (v, x) in pser[ie].iter_mut().zip(t.pp.values()) {
                *v += Complex64::new(*x, 0.0);
            }
            theta[ie] += t.beta;
        }
        if let Some(io) = io {
            for (v, x) in pser[io].iter_mut().zip(t.pm.values()) {
                *v += Complex64::new(0.0, *x);
            }
        }
    }
    // θ − b²
    let mut rate = theta.clone();
    if let Some(i2) = space.index(2, 0) {
        rate[i2] -= 1.0;
    }
    let mons = space.monomials().to_vec();

    let mut out = vec![vec![czero(); n]; len];
    for node in 0..n {
        let r = grid.nodes()[node];
        let ps: Coeffs = (0..len).map(|m| pser[m][node]).collect();
        // ∂_b P
        let mut db = space.zero();
        for (idx, &(m, nn)) in mons.iter().enumerate() {
            if m > 0 {
                if let Some(t) = space.index(m - 1, nn) {
                    db[t] = ps[idx] * m as f64;
                }
            }
        }
        let mut acc = space.mul(&rate, &db);
        for v in acc.iter_mut() {
            *v *= i_unit;
        }
        // −iα b n P  (λ_s/λ = −b acting on μ^n)
        for (idx, &(m, nn)) in mons.iter().enumerate() {
            if nn > 0 {
                if let Some(t) = space.index(m + 1, nn) {
                    acc[t] -= i_unit * alpha * nn as f64 * ps[idx];
                }
            }
        }
        // −P + θ|y|²P/4
        let tp = space.mul(&theta, &ps);
        for idx in 0..len {
            acc[idx] += -ps[idx] + tp[idx] * (r * r / 4.0);
        }
        // f(P) + μ g(P)
        let qv = ps[0].re;
        if qv > Q_FLOOR {
            let mut zeta = ps.clone();
            zeta[0] = czero();
            for z in zeta.iter_mut() {
                *z /= qv;
            }
            let zbar: Coeffs = zeta.iter().map(|z| z.conj()).collect();
            let f = space.mul(&space.binomial(&zeta, qexp / 2.0 + 1.0), &space.binomial(&zbar, qexp / 2.0));
            let g = space.mul(&space.binomial(&zeta, (pexp + 1.0) / 2.0), &space.binomial(&zbar, (pexp - 1.0) / 2.0));
            let fq = qv.powf(qexp + 1.0);
            let gq = qv.powf(pexp);
            for (idx, &(m, nn)) in mons.iter().enumerate() {
                acc[idx] += f[idx] * fq;
                if let Some(t) = space.index(m, nn + 1) {
                    acc[t] += g[idx] * gq;
                }
            }
        }
        for idx in 0..len {
            out[idx][node] = acc[idx];
        }
    }
    // ΔP, monomial by monomial
    let lap = grid.laplacian();
    for idx in 0..len {
        if pser[idx].iter().all(|v| *v == czero()) {
            continue;
        }
        let l = lap.apply(&pser[idx]);
        for (o, v) in out[idx].iter_mut().zip(l) {
            *o += v;
        }
    }
    out
}
