//! Modulation decomposition u = λ^{−d/2}(P_b + ε)(x/λ)e^{iγ}, the Mod(s) residuals,
//! the energy–Morawetz functionals H, J, S and power-law rate fits.
//!
//! ε always lives on the profile grid (the rescaled variable y).

use crate::error::{Error, Result};
use crate::model;
use crate::numcore::csv::row;
use crate::numcore::{gauss_legendre_unit, line_fit, ComplexField, InterpPlan, RadialGrid, RealField};
use crate::profile::ProfileCoeffs;
use crate::reducedlaw::ModState;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use std::sync::{Arc, OnceLock};

const MAX_NEWTON: usize = 60;

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// (s, t) are copied from the guess; λ, b, γ are solved for.
    pub state: ModState,
    pub eps: ComplexField,
    /// ⟨ε, iΛP_b⟩, ⟨ε, |y|²P_b⟩, ⟨ε, iρ_b⟩
    pub ortho_resid: [f64; 3],
    pub eps_l2: f64,
    pub eps_h1: f64,
    pub iterations: usize,
}

fn chirp(grid: &RadialGrid, b: f64) -> Vec<Complex64> {
    grid.nodes().iter().map(|r| Complex64::from_polar(1.0, -b * r * r / 4.0)).collect()
}

fn times(f: &ComplexField, c: &[Complex64]) -> ComplexField {
    f.with_values(f.values().iter().zip(c).map(|(a, b)| a * b).collect())
}

fn times_r2(f: &ComplexField, k: f64) -> ComplexField {
    f.map_r(|r, v| v * (k * r * r))
}

/// v(y) = λ_w^{d/2} w(λ_w y) e^{−iγ} sampled on `target`.
fn pull_back(w: &ComplexField, lw: f64, gamma: f64, target: &Arc<RadialGrid>) -> ComplexField {
    let pts: Vec<f64> = target.nodes().iter().map(|r| lw * r).collect();
    let amp = Complex64::from_polar(lw.powf(0.5 * target.dim() as f64), -gamma);
    let vals = InterpPlan::new(w.grid(), &pts).apply(w.values()).into_iter().map(|z| z * amp).collect();
    ComplexField::new(target.clone(), vals).expect("target grid")
}

/// Decompose u given on its own grid (frame scale 1).
pub fn decompose(u: &ComplexField, profile: &ProfileCoeffs, guess: &ModState) -> Result<Decomposition> {
    decompose_scaled(u, 1.0, profile, guess)
}

/// Decompose u(x) = L^{−d/2} w(x/L), w given on its grid.
///
/// Newton on (ln λ, b, γ) for the three orthogonality pairings, with the exact
/// Jacobian of the discrete pairings except that Λ is the discrete operator.
pub fn decompose_scaled(w: &ComplexField, scale: f64, profile: &ProfileCoeffs, guess: &ModState) -> Result<Decomposition> {
    let g = profile.grid().clone();
    if w.grid().dim() != g.dim() {
        return Err(Error::GridMismatch);
    }
    if !(guess.lambda > 0.0 && scale > 0.0) {
        return Err(Error::Decompose(format!("bad guess λ = {}, frame scale {scale}", guess.lambda)));
    }
    let rho = profile.rho().to_complex();
    let mut x = Vector3::new(guess.lambda.ln(), guess.b, guess.gamma);
    for it in 0..MAX_NEWTON {
        let (lam, b, gamma) = (x[0].exp(), x[1], x[2]);
        let v = pull_back(w, lam / scale, gamma, &g);
        let (p, dpb, dpl) = profile.derivatives(b, lam);
        let ch = chirp(&g, b);
        let pb = times(&p, &ch);
        // ∂_b P_b and λ∂_λ P_b
        let db = times(&dpb.sub(&times_r2(&p, 0.25).times_i()), &ch);
        let dl = times(&dpl, &ch);
        let eps = v.sub(&pb);
        let dirs = [pb.lambda().times_i(), times_r2(&pb, 1.0), times(&rho, &ch).times_i()];
        let r = Vector3::from_fn(|k, _| eps.inner_unchecked(&dirs[k]));
        let eps_h1 = eps.h1_norm_sqr().sqrt();
        let tol: Vec<f64> = dirs.iter().map(|d| d.norm() * (1e-11 * eps_h1 + 1e-14 * v.norm())).collect();
        if (0..3).all(|k| r[k].abs() <= tol[k]) {
            return Ok(Decomposition {
                state: ModState { s: guess.s, t: guess.t, lambda: lam, b, gamma },
                eps_l2: eps.norm(),
                eps_h1,
                eps,
                ortho_resid: [r[0], r[1], r[2]],
                iterations: it,
            });
        }
        let de = [v.lambda().sub(&dl), db.scale(-1.0), v.times_i().scale(-1.0)];
        let ddirs_l = [dl.lambda().times_i(), times_r2(&dl, 1.0)];
        let ddirs_b = [db.lambda().times_i(), times_r2(&db, 1.0)];
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            for j in 0..3 {
                jac[(k, j)] = de[j].inner_unchecked(&dirs[k]);
            }
            match k {
                0 | 1 => {
                    jac[(k, 0)] += eps.inner_unchecked(&ddirs_l[k]);
                    jac[(k, 1)] += eps.inner_unchecked(&ddirs_b[k]);
                }
                _ => jac[(k, 1)] += eps.inner_unchecked(&times_r2(&dirs[2], -0.25).times_i()),
            }
        }
        let step = jac
            .lu()
            .solve(&(-r))
            .ok_or_else(|| Error::Decompose("singular orthogonality Jacobian".into()))?;
        // keep λ and b within a trust region; the tube is narrow anyway
        let cap = (step[0].abs() / 0.5).max(step[1].abs() / 0.5).max(1.0);
        x += step / cap;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Decompose("non-finite Newton iterate".into()));
        }
    }
    Err(Error::Decompose(format!("orthogonality Newton did not converge in {MAX_NEWTON} iterations")))
}

/// w on `grid` (frame scale L) for u = λ^{−d/2}(P_b + ε)(x/λ)e^{iγ}; ε = 0 if absent.
pub fn reconstruct(
    profile: &ProfileCoeffs,
    st: &ModState,
    eps: Option<&ComplexField>,
    grid: Arc<RadialGrid>,
    scale: f64,
) -> Result<ComplexField> {
    if grid.dim() != profile.grid().dim() {
        return Err(Error::GridMismatch);
    }
    let mut v = profile.profile_b(st.b, st.lambda);
    if let Some(e) = eps {
        v.same_grid(e)?;
        v = v.add(e);
    }
    // w(y') = λ_w^{−d/2} v(y'/λ_w) e^{iγ}
    let lw = st.lambda / scale;
    Ok(pull_back(&v, 1.0 / lw, -st.gamma, &grid))
}

/// ½⟨L₊ε₁, ε₁⟩ + ½⟨L₋ε₂, ε₂⟩, ε = ε₁ + iε₂.
pub fn quadratic_form(eps: &ComplexField, profile: &ProfileCoeffs) -> Result<f64> {
    let pair = profile.pair();
    let (e1, e2) = (eps.re(), eps.im());
    Ok(0.5 * pair.apply_lplus(&e1)?.inner(&e1)? + 0.5 * pair.apply_lminus(&e2)?.inner(&e2)?)
}

/// H(ε) = ½‖∇ε‖² + ½‖ε‖² − ∫[F(P_b+ε) − F(P_b) − dF·ε] − λ^α∫[G(P_b+ε) − G(P_b) − dG·ε].
///
/// The remainders are evaluated as ∫₀¹(1−τ) d²F(P_b+τε)(ε,ε) dτ, so no O(1)
/// quantities cancel.
pub fn lyapunov_h(dec: &Decomposition, profile: &ProfileCoeffs) -> f64 {
    let m = profile.model();
    let (q, k) = (4.0 / m.d as f64, m.p - 1.0);
    let mu = dec.state.lambda.powf(m.alpha());
    let pb = profile.profile_b(dec.state.b, dec.state.lambda);
    let gl = gauss_legendre_unit();
    let grid = dec.eps.grid();
    let mut rem = 0.0;
    for ((pv, ev), w) in pb.values().iter().zip(dec.eps.values()).zip(grid.weights()) {
        if ev.norm_sqr() == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for &(tau, gw) in &gl {
            let z = pv + ev * tau;
            acc += gw * (1.0 - tau) * (model::second_variation(q, z, *ev) + mu * model::second_variation(k, z, *ev));
        }
        rem += w * acc;
    }
    0.5 * dec.eps.h1_norm_sqr() - rem
}

/// J(ε) = ½ Im ∫ ∇φ_A·∇ε ε̄.
pub fn lyapunov_j(dec: &Decomposition, params: &LyapunovParams) -> Result<f64> {
    dec.eps.same_grid(&params.dphi_a)?;
    let de = dec.eps.dr();
    let g = dec.eps.grid();
    Ok(0.5
        * de.values()
            .iter()
            .zip(dec.eps.values())
            .zip(params.dphi_a.values())
            .zip(g.weights())
            .map(|(((d, e), f), w)| w * f * (d * e.conj()).im)
            .sum::<f64>())
}

/// S = (H + bJ)/λ⁴.
pub fn lyapunov_s(dec: &Decomposition, profile: &ProfileCoeffs, params: &LyapunovParams) -> Result<f64> {
    let l4 = dec.state.lambda.powi(4);
    Ok((lyapunov_h(dec, profile) + dec.state.b * lyapunov_j(dec, params)?) / l4)
}

/// Scalar monitors of one decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    pub h: f64,
    pub j: f64,
    pub s: f64,
    pub quad_form: f64,
    pub inner_eps_q: f64,
}

pub fn monitors(dec: &Decomposition, profile: &ProfileCoeffs, params: &LyapunovParams) -> Result<Monitors> {
    let h = lyapunov_h(dec, profile);
    let j = lyapunov_j(dec, params)?;
    Ok(Monitors {
        h,
        j,
        s: (h + dec.state.b * j) / dec.state.lambda.powi(4),
        quad_form: quadratic_form(&dec.eps, profile)?,
        inner_eps_q: dec.eps.inner(&profile.q().to_complex())?,
    })
}

// φ'' on [1, 2] is 1 + c₂x² + c₃x³ + c₄x⁴ (x = r − 1), matched to C³ at r = 1 and
// r = 2 and carrying φ' from 1 to 3 − e^{−2}. The outer branch is 3r + e^{−r} + C.
fn bridge() -> &'static ([f64; 3], f64) {
    static B: OnceLock<([f64; 3], f64)> = OnceLock::new();
    B.get_or_init(|| {
        let e = (-2.0f64).exp();
        let m = Matrix3::new(1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 1.0 / 3.0, 0.25, 0.2);
        let c = m.lu().solve(&Vector3::new(e - 1.0, -e, 1.0 - e)).expect("nonsingular");
        let c = [c[0], c[1], c[2]];
        let at2 = 2.0 + c[0] / 12.0 + c[1] / 20.0 + c[2] / 30.0;
        (c, at2 - (6.0 + e))
    })
}

/// Morawetz weight φ: r²/2 on [0,1], 3r + e^{−r} + C on [2,∞), convex in between.
pub fn phi(r: f64) -> f64 {
    let r = r.abs();
    let (c, shift) = bridge();
    if r <= 1.0 {
        0.5 * r * r
    } else if r < 2.0 {
        let x = r - 1.0;
        0.5 + x + 0.5 * x * x + c[0] * x.powi(4) / 12.0 + c[1] * x.powi(5) / 20.0 + c[2] * x.powi(6) / 30.0
    } else {
        3.0 * r + (-r).exp() + shift
    }
}

/// φ'(r)
pub fn dphi(r: f64) -> f64 {
    let (c, _) = bridge();
    let s = r.signum();
    let r = r.abs();
    s * if r <= 1.0 {
        r
    } else if r < 2.0 {
        let x = r - 1.0;
        1.0 + x + c[0] * x.powi(3) / 3.0 + c[1] * x.powi(4) / 4.0 + c[2] * x.powi(5) / 5.0
    } else {
        3.0 - (-r).exp()
    }
}

/// φ''(r)
pub fn d2phi(r: f64) -> f64 {
    let (c, _) = bridge();
    let r = r.abs();
    if r <= 1.0 {
        1.0
    } else if r < 2.0 {
        let x = r - 1.0;
        1.0 + c[0] * x * x + c[1] * x.powi(3) + c[2] * x.powi(4)
    } else {
        (-r).exp()
    }
}

/// φ_A(y) = A²φ(y/A) and its first two radial derivatives on a grid.
#[derive(Debug, Clone)]
pub struct LyapunovParams {
    pub a: f64,
    pub phi_a: RealField,
    pub dphi_a: RealField,
    pub d2phi_a: RealField,
}

impl LyapunovParams {
    pub fn new(a: f64, grid: Arc<RadialGrid>) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Param(format!("Morawetz radius A must be positive, got {a}")));
        }
        Ok(Self {
            a,
            phi_a: RealField::from_fn(grid.clone(), |r| a * a * phi(r / a)),
            dphi_a: RealField::from_fn(grid.clone(), |r| a * dphi(r / a)),
            d2phi_a: RealField::from_fn(grid, |r| d2phi(r / a)),
        })
    }
}

/// Derivative of samples f(s) by local quadratic interpolation (nonuniform s).
pub fn derivative_nonuniform(s: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.len();
    assert_eq!(n, f.len());
    if n < 3 {
        return vec![f64::NAN; n];
    }
    (0..n)
        .map(|k| {
            let c = k.clamp(1, n - 2);
            let (h1, h2) = (s[c] - s[c - 1], s[c + 1] - s[c]);
            let (fa, fb, fc) = (f[c - 1], f[c], f[c + 1]);
            if k == c {
                -h2 / (h1 * (h1 + h2)) * fa + (h2 - h1) / (h1 * h2) * fb + h1 / (h2 * (h1 + h2)) * fc
            } else if k < c {
                -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * fa + (h1 + h2) / (h1 * h2) * fb - h1 / (h2 * (h1 + h2)) * fc
            } else {
                h2 / (h1 * (h1 + h2)) * fa - (h1 + h2) / (h1 * h2) * fb + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * fc
            }
        })
        .collect()
}

/// Mod(s) = (b + λ_s/λ, b_s + b² − θ, 1 − γ_s) along a sampled trajectory.
pub fn mod_residuals(states: &[ModState], theta: impl Fn(f64, f64) -> f64) -> Vec<[f64; 3]> {
    let s: Vec<f64> = states.iter().map(|x| x.s).collect();
    let col = |f: fn(&ModState) -> f64| derivative_nonuniform(&s, &states.iter().map(f).collect::<Vec<_>>());
    let ll = col(|x| x.lambda.ln());
    let bs = col(|x| x.b);
    let gs = col(|x| x.gamma);
    states
        .iter()
        .enumerate()
        .map(|(k, x)| [x.b + ll[k], bs[k] + x.b * x.b - theta(x.b, x.lambda), 1.0 - gs[k]])
        .collect()
}

/// One stored step of a minimal-mass run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrajPoint {
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    pub b: f64,
    pub gamma: f64,
    pub grad_norm: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub eps_l2: f64,
    pub eps_h1: f64,
    /// largest |orthogonality pairing|
    pub ortho: f64,
    pub modr: [f64; 3],
    pub h: f64,
    pub j: f64,
    pub s_lyap: f64,
    pub quad_form: f64,
    pub inner_eps_q: f64,
}

impl TrajPoint {
    pub fn mod_state(&self) -> ModState {
        ModState { s: self.s, t: self.t, lambda: self.lambda, b: self.b, gamma: self.gamma }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    /// Fill the Mod(s) columns by differencing the stored states.
    pub fn fill_mod(&mut self, theta: impl Fn(f64, f64) -> f64) {
        let states: Vec<ModState> = self.points.iter().map(|p| p.mod_state()).collect();
        for (p, m) in self.points.iter_mut().zip(mod_residuals(&states, theta)) {
            p.modr = m;
        }
    }

    pub fn run_csv(&self) -> String {
        let mut out = String::from("t,s,lambda,b,gamma,grad_norm,mass_drift,energy_drift,eps_H1,mod_resid,S_lyapunov\n");
        for p in &self.points {
            let m = p.modr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            out.push_str(&row(&[
                p.t, p.s, p.lambda, p.b, p.gamma, p.grad_norm, p.mass_drift, p.energy_drift, p.eps_h1, m, p.s_lyap,
            ]));
            out.push('\n');
        }
        out
    }

    pub fn analysis_csv(&self) -> String {
        let mut out = String::from("s,t,lambda,b,gamma,eps_l2,eps_h1,mod1,mod2,mod3,H,J,S,inner_eps_Q\n");
        for p in &self.points {
            out.push_str(&row(&[
                p.s,
                p.t,
                p.lambda,
                p.b,
                p.gamma,
                p.eps_l2,
                p.eps_h1,
                p.modr[0],
                p.modr[1],
                p.modr[2],
                p.h,
                p.j,
                p.s_lyap,
                p.inner_eps_q,
            ]));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityCheck {
    /// steps with S < −floor
    pub violations: usize,
    /// steps with S_{k+1} − S_k < −(floor_k + floor_{k+1})
    pub monotone_violations: usize,
    /// min over steps of (S + floor)
    pub min_margin: f64,
    /// min of Sλ⁴/‖ε‖²_{H¹} over steps with ε above round-off
    pub min_ratio: f64,
    pub passed: bool,
}

/// Error floor s^{−2(K+1)}/λ⁴.
pub fn s_floor(s: f64, lambda: f64, order: usize) -> f64 {
    s.powf(-2.0 * (order as f64 + 1.0)) / lambda.powi(4)
}

/// S ≥ −floor at every stored step (and the monotonicity trend, reported).
pub fn coercivity_check_s(points: &[TrajPoint], order: usize) -> CoercivityCheck {
    let floors: Vec<f64> = points.iter().map(|p| s_floor(p.s, p.lambda, order)).collect();
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    for (p, f) in points.iter().zip(&floors) {
        min_margin = min_margin.min(p.s_lyap + f);
        if p.s_lyap < -f {
            violations += 1;
        }
        if p.eps_h1 > 1e-12 {
            min_ratio = min_ratio.min(p.s_lyap * p.lambda.powi(4) / (p.eps_h1 * p.eps_h1));
        }
    }
    let monotone_violations = points
        .windows(2)
        .zip(floors.windows(2))
        .filter(|(p, f)| p[1].s_lyap - p[0].s_lyap < -(f[0] + f[1]))
        .count();
    CoercivityCheck { violations, monotone_violations, min_margin, min_ratio, passed: violations == 0 }
}

/// Where the blow-up time in |T* − t| comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlowupTime {
    Fixed(f64),
    /// chosen to minimise the log-log residual
    Fitted,
}

/// q ≈ amplitude·|T* − t|^exponent over the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub t_star: f64,
    /// log₁₀ range of q inside the window
    pub decades: f64,
    pub points: usize,
}

fn fit_at(t: &[f64], q: &[f64], t_star: f64) -> Result<crate::numcore::LineFit> {
    let x: Vec<f64> = t.iter().map(|v| (t_star - v).ln()).collect();
    let y: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    line_fit(&x, &y)
}

pub fn fit_rate(t: &[f64], q: &[f64], window: (f64, f64), t_star: BlowupTime, min_decades: f64) -> Result<RateFit> {
    if t.len() != q.len() {
        return Err(Error::Param("fit_rate: t and q differ in length".into()));
    }
    let (tw, qw): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(q)
        .filter(|(tv, _)| **tv >= window.0 && **tv <= window.1)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if tw.len() < 3 || qw.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Param(format!("fit_rate: need ≥ 3 positive samples in window, got {}", tw.len())));
    }
    let (qmin, qmax) = qw.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let decades = (qmax / qmin).log10();
    if decades < min_decades {
        return Err(Error::WindowTooShort { decades, required: min_decades });
    }
    let t_last = tw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t_first = tw.iter().cloned().fold(f64::INFINITY, f64::min);
    let ts = match t_star {
        BlowupTime::Fixed(v) => {
            if !(v > t_last) {
                return Err(Error::Param(format!("T* = {v} must exceed the window end {t_last}")));
            }
            v
        }
        BlowupTime::Fitted => {
            let span = t_last - t_first;
            let sse = |ld: f64| -> f64 {
                let f = fit_at(&tw, &qw, t_last + ld.exp()).expect("nondegenerate");
                (1.0 - f.r2).max(0.0)
            };
            // coarse scan in ln δ, then golden section around the best point
            let (lo, hi) = ((1e-6 * span).ln(), (100.0 * span).ln());
            let n = 240;
            let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
            let kbest = (0..=n).min_by(|a, b| sse(grid[*a]).total_cmp(&sse(grid[*b]))).expect("nonempty");
            let (mut a, mut b) = (grid[kbest.saturating_sub(1)], grid[(kbest + 1).min(n)]);
            let gr = 0.5 * (5f64.sqrt() - 1.0);
            let (mut c, mut d) = (b - gr * (b - a), a + gr * (b - a));
            let (mut fc, mut fd) = (sse(c), sse(d));
            for _ in 0..80 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - gr * (b - a);
                    fc = sse(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + gr * (b - a);
                    fd = sse(d);
                }
            }
            t_last + (0.5 * (a + b)).exp()
        }
    };
    let f = fit_at(&tw, &qw, ts)?;
    Ok(RateFit {
        exponent: f.slope,
        amplitude: f.intercept.exp(),
        r2: f.r2,
        window: (t_first, t_last),
        t_star: ts,
        decades,
        points: tw.len(),
    })
}

/// `quantity,exponent,expected,amplitude,r2,window_lo,window_hi`
pub fn rate_fit_csv(rows: &[(&str, RateFit, f64)]) -> String {
    let mut out = String::from("quantity,exponent,expected,amplitude,r2,window_lo,window_hi\n");
    for (name, f, expected) in rows {
        out.push_str(name);
        out.push(',');
        out.push_str(&row(&[f.exponent, *expected, f.amplitude, f.r2, f.window.0, f.window.1]));
        out.push('\n');
    }
    out
}
