//! The reduced (λ, b) blow-up law
//!
//!   b_s + b² − θ(b, λ) = 0,   λ_s/λ + b = 0,   dt/ds = λ²,   γ_s = 1,
//!
//! its explicit solution for θ = βλ^α, the s ↔ t conversion, the function 𝓕 and
//! the choice of final data (b₁, λ₁).

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::csv::row;
use crate::numcore::{dopri5, find_root, integrate_adaptive, OdeOptions, OdeSolution};
use crate::profile::ProfileCoeffs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawConstants {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub c_s: f64,
    pub c_lambda: f64,
    pub c_b: f64,
    pub lambda0: f64,
    /// 8E₀/‖yQ‖²
    pub c0: f64,
    pub e0: f64,
    pub delta_alpha: f64,
    /// ‖yQ‖²
    pub y2q: f64,
}

/// Modulation parameters at one rescaled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModState {
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    pub b: f64,
    pub gamma: f64,
}

impl LawConstants {
    pub fn new(model: Model, beta: f64, y2q: f64, e0: f64, lambda0: f64) -> Result<Self> {
        let alpha = model.alpha();
        if !(beta > 0.0) || !(y2q > 0.0) {
            return Err(Error::Param(format!("need β > 0 and ‖yQ‖² > 0, got {beta}, {y2q}")));
        }
        if !(lambda0 > 0.0 && lambda0 < 1.0) {
            return Err(Error::Param(format!("λ₀ must lie in (0,1), got {lambda0}")));
        }
        let c0 = 8.0 * e0 / y2q;
        let k2 = 2.0 * beta / (2.0 - alpha);
        if k2 + c0 * lambda0.powf(2.0 - alpha) <= 0.0 {
            return Err(Error::Param(format!(
                "2β/(2−α) + C₀λ₀^(2−α) = {} ≤ 0; decrease λ₀",
                k2 + c0 * lambda0.powf(2.0 - alpha)
            )));
        }
        let a = 0.5 * alpha * k2.sqrt();
        let c_s = alpha / (4.0 - alpha) * a.powf(-4.0 / alpha);
        let cs_pow = c_s.powf(-alpha / (4.0 - alpha));
        Ok(Self {
            alpha,
            sigma: model.sigma(),
            beta,
            c_s,
            c_lambda: ((4.0 - alpha) / alpha * cs_pow).sqrt(),
            c_b: 2.0 / alpha * cs_pow,
            lambda0,
            c0,
            e0,
            delta_alpha: (0.25f64).min(2.0 / alpha - 1.0),
            y2q,
        })
    }

    /// From a built profile (β = β_{0,0}, ‖yQ‖² of its ground state).
    pub fn from_profile(profile: &ProfileCoeffs, e0: f64, lambda0: f64) -> Result<Self> {
        Self::new(profile.model(), profile.beta(), profile.pair().ground_state().yq2, e0, lambda0)
    }

    /// 2β/(2−α)
    pub fn kappa2(&self) -> f64 {
        2.0 * self.beta / (2.0 - self.alpha)
    }

    pub fn theta_one_term(&self, _b: f64, lambda: f64) -> f64 {
        self.beta * lambda.powf(self.alpha)
    }

    /// (λ_app(s), b_app(s)).
    pub fn app_law(&self, s: f64) -> Result<(f64, f64)> {
        if !(s > 0.0) {
            return Err(Error::Param(format!("app law needs s > 0, got {s}")));
        }
        let a = 0.5 * self.alpha * self.kappa2().sqrt();
        Ok(((a * s).powf(-2.0 / self.alpha), 2.0 / (self.alpha * s)))
    }

    /// Residuals (b_s + b² − βλ^α, b + λ_s/λ) of the app law, derivatives taken analytically.
    pub fn app_law_residual(&self, s: f64) -> Result<(f64, f64)> {
        let (lam, b) = self.app_law(s)?;
        let b_s = -2.0 / (self.alpha * s * s);
        let ls = -2.0 / (self.alpha * s);
        Ok((b_s + b * b - self.beta * lam.powf(self.alpha), b + ls))
    }

    /// t_app(s) = −C_s s^{−(4−α)/α}.
    pub fn time_of_s(&self, s: f64) -> f64 {
        -self.c_s * s.powf(-(4.0 - self.alpha) / self.alpha)
    }

    /// Inverse of [`time_of_s`] for t < 0.
    pub fn s_of_time(&self, t: f64) -> Result<f64> {
        if !(t < 0.0) {
            return Err(Error::Param(format!("t_app must be negative, got {t}")));
        }
        Ok((-t / self.c_s).powf(-self.alpha / (4.0 - self.alpha)))
    }

    /// 𝓔(b,λ) = b²/λ² − (2β/(2−α))λ^{α−2}.
    pub fn energy_two_term(&self, b: f64, lambda: f64) -> f64 {
        b * b / (lambda * lambda) - self.kappa2() * lambda.powf(self.alpha - 2.0)
    }

    /// 𝓕(λ) = ∫_λ^{λ₀} dμ / (μ^{α/2+1} √(2β/(2−α) + C₀μ^{2−α})), integrated in ln μ.
    pub fn big_f(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda <= self.lambda0) {
            return Err(Error::Param(format!("𝓕 needs 0 < λ ≤ λ₀, got {lambda}")));
        }
        if lambda == self.lambda0 {
            return Ok(0.0);
        }
        let (k2, c0, a) = (self.kappa2(), self.c0, self.alpha);
        let integrand = |u: f64| {
            let d = k2 + c0 * (u * (2.0 - a)).exp();
            (-0.5 * a * u).exp() / d.sqrt()
        };
        // the radicand is monotone in μ, so checking the endpoints suffices
        for mu in [lambda, self.lambda0] {
            if k2 + c0 * mu.powf(2.0 - a) <= 0.0 {
                return Err(Error::Quadrature(format!("𝓕 integrand singular at μ = {mu:e}")));
            }
        }
        integrate_adaptive(integrand, lambda.ln(), self.lambda0.ln(), 0.0, 1e-13)
    }

    /// The unique λ ∈ (0, λ₀) with 𝓕(λ) = s.
    pub fn big_f_inverse(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Param(format!("𝓕⁻¹ needs s > 0, got {s}")));
        }
        let a = 0.5 * self.alpha * self.kappa2().sqrt();
        // C₀ = 0 solution as the starting point
        let guess = (a * s + self.lambda0.powf(-0.5 * self.alpha)).powf(-2.0 / self.alpha);
        let g = |u: f64| self.big_f(u.exp().min(self.lambda0)).map(|f| f - s).unwrap_or(f64::NAN);
        let top = self.lambda0.ln();
        let (mut lo, mut hi) = ((guess.ln() - 1.0).min(top), (guess.ln() + 1.0).min(top));
        let mut tries = 0;
        while !(g(lo) > 0.0) {
            lo -= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::Root(format!("𝓕⁻¹({s}): could not bracket from below")));
            }
        }
        while !(g(hi) < 0.0) && hi < top {
            hi = (hi + 1.0).min(top);
        }
        let u = find_root(g, lo, hi, 1e-15, 300)?;
        Ok(u.exp().min(self.lambda0))
    }
}

/// How 𝓔(b, λ) is evaluated when choosing b₁.
#[derive(Debug, Clone, Copy)]
pub enum LawEnergy<'a> {
    /// b²/λ² − (2β/(2−α))λ^{α−2}
    TwoTerm,
    /// 8E(P_{b,λ})/‖yQ‖² by quadrature
    Profile(&'a ProfileCoeffs),
}

impl LawEnergy<'_> {
    pub fn eval(&self, c: &LawConstants, b: f64, lambda: f64) -> Result<f64> {
        match self {
            LawEnergy::TwoTerm => Ok(c.energy_two_term(b, lambda)),
            LawEnergy::Profile(p) => Ok(8.0 * p.profile_energy(b, lambda)? / c.y2q),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InitData {
    pub s1: f64,
    pub b1: f64,
    pub lambda1: f64,
    /// |λ₁^{α/2}/λ_app^{α/2}(s₁) − 1| + |b₁/b_app(s₁) − 1|
    pub proximity: f64,
    /// |h(b_app(s₁))| = λ₁²|𝓔(b_app(s₁), λ₁) − C₀|
    pub h_at_app: f64,
    /// 𝓕(λ₁) − s₁
    pub f_defect: f64,
    /// 𝓔(b₁, λ₁) − C₀
    pub e_defect: f64,
}

/// Final data: 𝓕(λ₁) = s₁ and 𝓔(b₁, λ₁) = C₀.
pub fn init_data(c: &LawConstants, s1: f64, energy: LawEnergy<'_>) -> Result<InitData> {
    let lambda1 = c.big_f_inverse(s1)?;
    let f_defect = c.big_f(lambda1)? - s1;
    let (lam_app, b_app) = c.app_law(s1)?;
    let h = |b: f64| energy.eval(c, b, lambda1).map(|e| lambda1 * lambda1 * (e - c.c0)).unwrap_or(f64::NAN);
    let h_at_app = h(b_app).abs();
    let (mut lo, mut hi) = (0.5 * b_app, 2.0 * b_app);
    for _ in 0..60 {
        if h(lo) < 0.0 {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..60 {
        if h(hi) > 0.0 {
            break;
        }
        hi *= 2.0;
    }
    let b1 = find_root(h, lo, hi, 1e-15, 300).map_err(|e| Error::Root(format!("h(b) = 0 on [{lo:e}, {hi:e}]: {e}")))?;
    let e_defect = energy.eval(c, b1, lambda1)? - c.c0;
    let half = 0.5 * c.alpha;
    let proximity = ((lambda1 / lam_app).powf(half) - 1.0).abs() + (b1 / b_app - 1.0).abs();
    Ok(InitData { s1, b1, lambda1, proximity, h_at_app, f_defect, e_defect })
}

/// Integrated reduced law with dense output.
#[derive(Debug, Clone)]
pub struct LawTrajectory {
    pub consts: LawConstants,
    pub states: Vec<ModState>,
    sol: OdeSolution,
}

fn to_state(s: f64, y: &[f64]) -> ModState {
    ModState { s, t: y[2], lambda: y[0].exp(), b: y[1], gamma: y[3] }
}

impl LawTrajectory {
    /// Dense output at s inside the integrated range.
    pub fn at(&self, s: f64) -> Option<ModState> {
        self.sol.at(s).map(|y| to_state(s, &y))
    }

    /// b²/λ² − (2β/(2−α))λ^{α−2}: conserved for θ = βλ^α.
    pub fn invariant(&self, st: &ModState) -> f64 {
        self.consts.energy_two_term(st.b, st.lambda)
    }

    /// `s,t,lambda,b,gamma,lambda_app,b_app,invariant_E`
    pub fn csv(&self) -> String {
        let mut out = String::from("s,t,lambda,b,gamma,lambda_app,b_app,invariant_E\n");
        for st in &self.states {
            let (la, ba) = self.consts.app_law(st.s).unwrap_or((f64::NAN, f64::NAN));
            out.push_str(&row(&[st.s, st.t, st.lambda, st.b, st.gamma, la, ba, self.invariant(st)]));
            out.push('\n');
        }
        out
    }
}

/// Integrate the reduced law from `start` (at s = start.s) to s_end with the given θ.
/// Forward (s_end > s) is the production direction; backward is allowed for diagnostics.
pub fn integrate_reduced(
    c: &LawConstants,
    start: ModState,
    s_end: f64,
    theta: &dyn Fn(f64, f64) -> f64,
    opts: OdeOptions,
) -> Result<LawTrajectory> {
    if !(start.lambda > 0.0) {
        return Err(Error::Param(format!("λ must be positive, got {}", start.lambda)));
    }
    let rhs = |_s: f64, y: &[f64]| {
        let lam = y[0].exp();
        vec![-y[1], theta(y[1], lam) - y[1] * y[1], lam * lam, 1.0]
    };
    let y0 = [start.lambda.ln(), start.b, start.t, start.gamma];
    let h0 = opts.h0.min(1e-3 * start.s.abs().max(1.0));
    let sol = dopri5(rhs, start.s, &y0, s_end, OdeOptions { h0, ..opts })?;
    let states = sol.t.iter().zip(&sol.y).map(|(s, y)| to_state(*s, y)).collect();
    Ok(LawTrajectory { consts: *c, states, sol })
}

/// Start on the app law at s₁ with t = t_app(s₁), γ = 0.
pub fn app_state(c: &LawConstants, s: f64) -> Result<ModState> {
    let (lambda, b) = c.app_law(s)?;
    Ok(ModState { s, t: c.time_of_s(s), lambda, b, gamma: 0.0 })
}
