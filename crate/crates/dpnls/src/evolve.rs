//! Radial time stepping for i∂_t u + Δu + |u|^{4/d}u + ε|u|^{p−1}u = 0.
//!
//! The solver works in a dynamically rescaled frame u(t,x) = L^{−d/2} w(τ, x/L),
//! dτ/dt = 1/L², in which
//!   w_τ = (iΔ + aΛ)w + i(|w|^{4/d} + εL^α|w|^{p−1})w,   a = L_τ/L.
//! With a ≡ 0 and L ≡ 1 this is the plain equation on a fixed grid.
//! The frame velocity a is held constant over a step, so L(τ) is an exponential.

use crate::analysis::{self, LyapunovParams, TrajPoint, Trajectory};
use crate::error::{Error, Result};
use crate::groundstate::GroundState;
use crate::model::{self, Model};
use crate::numcore::csv::row;
use crate::profile::ProfileCoeffs;
use crate::reducedlaw::{init_data, InitData, LawConstants, LawEnergy, ModState};
use crate::numcore::{BandedLu, BandedMatrix, ComplexField, InterpPlan, RadialGrid};
use num_complex::Complex64;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Strang: exact nonlinear phase rotation, Crank–Nicolson linear part.
    SplitStep,
    /// Triple-jump composition of the Strang step (fourth order).
    SplitStep4,
    /// Implicit midpoint, nonlinear term resolved by fixed-point iteration.
    ImplicitMidpoint,
}

/// How the frame velocity a is chosen when a driver does not supply it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rescale {
    Off,
    /// a = −ġ − κ ln(‖∇w‖/‖∇w₀‖), ġ the last measured d ln‖∇u‖/dτ:
    /// keeps the rescaled gradient near its initial value.
    Gradient { kappa: f64 },
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub model: Model,
    /// sign of the subcritical term, one of −1, 0, 1
    pub epsilon: f64,
    /// grid in the rescaled variable
    pub grid: Arc<RadialGrid>,
    /// step in τ
    pub dt: f64,
    pub scheme: Scheme,
    pub rescale: Rescale,
    /// stop when ‖∇u‖ exceeds this multiple of its initial value
    pub blowup_factor: f64,
    /// stop when ‖∇w‖ exceeds this multiple of its initial value (frame lost)
    pub resolution_factor: f64,
    pub max_steps: usize,
    /// tolerance of the implicit-midpoint fixed point
    pub implicit_tol: f64,
    /// multiplier on the subcritical term (1 for the equation itself)
    pub g_scale: f64,
}

impl EvolutionConfig {
    pub fn new(model: Model, epsilon: f64, grid: Arc<RadialGrid>, dt: f64) -> Result<Self> {
        if ![-1.0, 0.0, 1.0].contains(&epsilon) {
            return Err(Error::Param(format!("ε must be −1, 0 or 1, got {epsilon}")));
        }
        if grid.dim() != model.d {
            return Err(Error::Param(format!("grid d={} but model d={}", grid.dim(), model.d)));
        }
        if !(dt > 0.0) {
            return Err(Error::Param(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            model,
            epsilon,
            grid,
            dt,
            scheme: Scheme::SplitStep4,
            rescale: Rescale::Off,
            blowup_factor: 50.0,
            resolution_factor: 10.0,
            max_steps: 10_000_000,
            implicit_tol: 1e-14,
            g_scale: 1.0,
        })
    }

    /// ε·g_scale, the coefficient of the subcritical term at L = 1.
    pub fn g_coefficient(&self) -> f64 {
        self.epsilon * self.g_scale
    }
}

/// Solution at one instant, stored in the rescaled frame.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub t: f64,
    pub tau: f64,
    /// frame scale L
    pub scale: f64,
    pub w: ComplexField,
}

impl FieldState {
    /// u at time t on the grid of `u` (L = 1).
    pub fn new(t: f64, u: ComplexField) -> Self {
        Self { t, tau: 0.0, scale: 1.0, w: u }
    }

    /// ‖u‖₂² = ‖w‖₂²
    pub fn mass(&self) -> f64 {
        self.w.norm_sqr()
    }

    /// ‖∇u‖₂
    pub fn grad_norm(&self) -> f64 {
        self.w.grad_norm_sqr().sqrt() / self.scale
    }

    /// E(u) = ½‖∇u‖² − ∫F(u) − ε∫G(u)
    pub fn energy(&self, model: &Model, epsilon: f64) -> f64 {
        let l = self.scale;
        model::energy(model, epsilon * l.powf(model.alpha()), &self.w) / (l * l)
    }

    /// The physical grid x = L·y.
    pub fn physical_grid(&self) -> Arc<RadialGrid> {
        Arc::new(self.w.grid().scaled(self.scale))
    }

    /// u on the physical grid.
    pub fn u(&self) -> ComplexField {
        let f = self.scale.powf(-0.5 * self.w.grid().dim() as f64);
        ComplexField::new(self.physical_grid(), self.w.values().iter().map(|v| v * f).collect()).expect("same length")
    }

    /// Fraction of the mass in the outer tenth of the grid.
    pub fn edge_mass_fraction(&self) -> f64 {
        let g = self.w.grid();
        let cut = 0.9 * g.r_max();
        let edge: f64 = g
            .nodes()
            .iter()
            .zip(g.weights())
            .zip(self.w.values())
            .filter(|((r, _), _)| **r > cut)
            .map(|((_, w), v)| w * v.norm_sqr())
            .sum();
        edge / self.mass().max(f64::MIN_POSITIVE)
    }
}

/// One-step propagator with the CN factorisation cached per frame velocity.
#[derive(Debug)]
pub struct Stepper {
    cfg: EvolutionConfig,
    lap: BandedMatrix<Complex64>,
    skew: BandedMatrix<Complex64>,
    cache: Vec<(f64, f64, BandedMatrix<Complex64>, BandedLu<Complex64>)>,
}

/// Yoshida weights: w₁, w₀ = 1 − 2w₁.
const TRIPLE_JUMP: [f64; 3] = [1.351_207_191_959_657_8, -1.702_414_383_919_315_3, 1.351_207_191_959_657_8];

/// ∫₀^h e^{kτ} dτ
fn exp_integral(k: f64, h: f64) -> f64 {
    if (k * h).abs() < 1e-8 {
        h * (1.0 + 0.5 * k * h)
    } else {
        (k * h).exp_m1() / k
    }
}

impl Stepper {
    pub fn new(cfg: EvolutionConfig) -> Self {
        let i = Complex64::new(0.0, 1.0);
        let lap = cfg.grid.laplacian().map(|v| i * v);
        let skew = cfg.grid.lambda_skew().map(|v| Complex64::new(v, 0.0));
        Self { cfg, lap, skew, cache: Vec::new() }
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    /// (I + h/2·A, LU of I − h/2·A), A = iΔ + aΛ_skew.
    fn cn(&mut self, a: f64, h: f64) -> Result<(&BandedMatrix<Complex64>, &BandedLu<Complex64>)> {
        let k = match self.cache.iter().position(|(ca, ch, _, _)| *ca == a && *ch == h) {
            Some(k) => k,
            None => {
                let mut op = self.lap.clone();
                if a != 0.0 {
                    op = op.add(&self.skew.scaled(Complex64::new(a, 0.0)));
                }
                let ones = vec![Complex64::new(1.0, 0.0); op.n()];
                let plus = op.scaled(Complex64::new(0.5 * h, 0.0)).plus_diag(&ones);
                let lu = op.scaled(Complex64::new(-0.5 * h, 0.0)).plus_diag(&ones).factor()?;
                // the triple jump needs two step sizes; keep a few entries
                if self.cache.len() >= 4 {
                    self.cache.remove(0);
                }
                self.cache.push((a, h, plus, lu));
                self.cache.len() - 1
            }
        };
        let (_, _, p, l) = &self.cache[k];
        Ok((p, l))
    }

    /// One Strang step of length h (h may be negative) from frame scale l0.
    fn strang(&mut self, w: &mut Vec<Complex64>, a: f64, h: f64, l0: f64) -> Result<()> {
        let alpha = self.cfg.model.alpha();
        let la0 = l0.powf(alpha);
        let first = la0 * exp_integral(alpha * a, 0.5 * h);
        let second = la0 * (alpha * a * 0.5 * h).exp() * exp_integral(alpha * a, 0.5 * h);
        self.rotate(w, 0.5 * h, first);
        let (plus, lu) = self.cn(a, h)?;
        let mut rhs = plus.matvec(w);
        lu.solve_in_place(&mut rhs);
        *w = rhs;
        self.rotate(w, 0.5 * h, second);
        Ok(())
    }

    fn rotate(&self, w: &mut [Complex64], h_crit: f64, h_sub: f64) {
        let q = 4.0 / self.cfg.model.d as f64;
        let pm1 = self.cfg.model.p - 1.0;
        let eps = self.cfg.g_coefficient();
        for v in w.iter_mut() {
            let m = v.norm();
            let mut phase = h_crit * m.powf(q);
            if eps != 0.0 {
                phase += eps * h_sub * m.powf(pm1);
            }
            *v *= Complex64::from_polar(1.0, phase);
        }
    }

    /// Advance by h in τ with frame velocity a.
    pub fn step_with(&mut self, st: &FieldState, a: f64, h: f64) -> Result<FieldState> {
        let alpha = self.cfg.model.alpha();
        let l0 = st.scale;
        let mut w = st.w.values().to_vec();
        match self.cfg.scheme {
            Scheme::SplitStep => self.strang(&mut w, a, h, l0)?,
            Scheme::SplitStep4 => {
                let mut l = l0;
                for c in TRIPLE_JUMP {
                    self.strang(&mut w, a, c * h, l)?;
                    l *= (a * c * h).exp();
                }
            }
            Scheme::ImplicitMidpoint => {
                let tol = self.cfg.implicit_tol;
                let q = 4.0 / self.cfg.model.d as f64;
                let pm1 = self.cfg.model.p - 1.0;
                let eps = self.cfg.g_coefficient() * (l0 * (0.5 * a * h).exp()).powf(alpha);
                let (plus, lu) = self.cn(a, h)?;
                let base = plus.matvec(&w);
                let i = Complex64::new(0.0, 1.0);
                let mut next = w.clone();
                let scale = w.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
                let mut converged = false;
                for _ in 0..100 {
                    let mut rhs = base.clone();
                    for ((r, a0), a1) in rhs.iter_mut().zip(&w).zip(&next) {
                        let m = 0.5 * (a0 + a1);
                        let n = m.norm();
                        *r += i * h * m * (n.powf(q) + eps * n.powf(pm1));
                    }
                    lu.solve_in_place(&mut rhs);
                    let diff = rhs.iter().zip(&next).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                    next = rhs;
                    if diff <= tol * scale {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Stagnation("implicit midpoint fixed point did not converge".into()));
                }
                w = next;
            }
        }
        Ok(FieldState {
            t: st.t + l0 * l0 * exp_integral(2.0 * a, h),
            tau: st.tau + h,
            scale: l0 * (a * h).exp(),
            w: st.w.with_values(w),
        })
    }

    pub fn step(&mut self, st: &FieldState, a: f64) -> Result<FieldState> {
        let h = self.cfg.dt;
        self.step_with(st, a, h)
    }
}

/// Scalar record of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub t: f64,
    pub tau: f64,
    pub scale: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub edge_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Reached,
    /// ‖∇u‖ passed blowup_factor × initial
    BlowUp,
    /// ‖∇w‖ passed resolution_factor × initial
    Resolution,
    MaxSteps,
    /// ‖ε‖_{H¹} left the modulation tube
    TubeExit,
}

#[derive(Debug, Clone)]
pub struct EvolveRecord {
    pub final_state: FieldState,
    pub summaries: Vec<StepSummary>,
    pub stop: StopReason,
}

impl EvolveRecord {
    /// Largest |m(t)/m(0) − 1|.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.summaries[0].mass;
        self.summaries.iter().map(|s| (s.mass / m0 - 1.0).abs()).fold(0.0, f64::max)
    }
    /// Largest |E(t) − E(0)| / max(|E(0)|, ½‖∇u₀‖²).
    pub fn energy_drift(&self) -> f64 {
        let s0 = self.summaries[0];
        let scale = s0.energy.abs().max(0.5 * s0.grad_norm * s0.grad_norm);
        self.summaries.iter().map(|s| (s.energy - s0.energy).abs() / scale).fold(0.0, f64::max)
    }
    pub fn csv(&self) -> String {
        let mut out = String::from("t,tau,scale,mass,energy,grad_norm,edge_mass\n");
        for s in &self.summaries {
            out.push_str(&row(&[s.t, s.tau, s.scale, s.mass, s.energy, s.grad_norm, s.edge_mass]));
            out.push('\n');
        }
        out
    }
}

fn summarize(st: &FieldState, cfg: &EvolutionConfig) -> StepSummary {
    StepSummary {
        t: st.t,
        tau: st.tau,
        scale: st.scale,
        mass: st.mass(),
        energy: st.energy(&cfg.model, cfg.g_coefficient()),
        grad_norm: st.grad_norm(),
        edge_mass: st.edge_mass_fraction(),
    }
}

/// τ-step that lands exactly on physical time t_end: L²(e^{2ah} − 1)/(2a) = t_end − t.
fn step_to_time(l: f64, a: f64, dt_phys: f64) -> f64 {
    let x = dt_phys / (l * l);
    if (a * x).abs() < 1e-12 {
        x
    } else {
        (2.0 * a * x).ln_1p() / (2.0 * a)
    }
}

/// Evolve to physical time t_end, recording a summary every `record_every` steps.
pub fn evolve_interval(state: FieldState, cfg: &EvolutionConfig, t_end: f64, record_every: usize) -> Result<EvolveRecord> {
    if state.w.grid().as_ref() != cfg.grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let mut stepper = Stepper::new(cfg.clone());
    let g0 = grad_w(&state.w);
    let grad0 = state.grad_norm();
    let mut st = state;
    let mut summaries = vec![summarize(&st, cfg)];
    let mut stop = StopReason::MaxSteps;
    // d ln‖∇u‖/dτ from the previous step
    let mut rate = 0.0;
    for n in 1..=cfg.max_steps {
        if st.t >= t_end {
            stop = StopReason::Reached;
            break;
        }
        let a = match cfg.rescale {
            Rescale::Off => 0.0,
            Rescale::Gradient { kappa } => -rate - kappa * (grad_w(&st.w) / g0).ln(),
        };
        let (lg_before, tau_before) = (st.grad_norm().ln(), st.tau);
        let t_full = st.t + st.scale * st.scale * exp_integral(2.0 * a, cfg.dt);
        st = if t_full > t_end {
            let h = step_to_time(st.scale, a, t_end - st.t);
            let mut s = stepper.step_with(&st, a, h)?;
            s.t = t_end;
            s
        } else {
            stepper.step(&st, a)?
        };
        if st.tau > tau_before {
            rate = (st.grad_norm().ln() - lg_before) / (st.tau - tau_before);
        }
        let last = st.t >= t_end;
        if n % record_every.max(1) == 0 || last {
            summaries.push(summarize(&st, cfg));
        }
        if st.grad_norm() > cfg.blowup_factor * grad0 {
            stop = StopReason::BlowUp;
            break;
        }
        if grad_w(&st.w) > cfg.resolution_factor * g0 {
            stop = StopReason::Resolution;
            break;
        }
        if last {
            stop = StopReason::Reached;
            break;
        }
    }
    if summaries.last().map(|s| s.t) != Some(st.t) {
        summaries.push(summarize(&st, cfg));
    }
    Ok(EvolveRecord { final_state: st, summaries, stop })
}

/// ‖∇w‖, floored away from zero
fn grad_w(w: &ComplexField) -> f64 {
    w.grad_norm_sqr().sqrt().max(1e-300)
}

/// S(t,x) = |t|^{−d/2} Q(x/|t|) e^{−i|x|²/(4|t|)} e^{i/|t|} on `grid` (x-nodes), t < 0.
pub fn exact_s(t: f64, grid: Arc<RadialGrid>, gs: &GroundState) -> Result<ComplexField> {
    if !(t < 0.0) {
        return Err(Error::Param(format!("S(t) is defined for t < 0, got {t}")));
    }
    if grid.dim() != gs.dim() {
        return Err(Error::GridMismatch);
    }
    let at = t.abs();
    let pts: Vec<f64> = grid.nodes().iter().map(|x| x / at).collect();
    let q = InterpPlan::new(gs.grid(), &pts).apply(gs.field().values());
    let amp = at.powf(-0.5 * grid.dim() as f64);
    let vals = grid
        .nodes()
        .iter()
        .zip(q)
        .map(|(x, qv)| Complex64::from_polar(amp * qv, -x * x / (4.0 * at) + 1.0 / at))
        .collect();
    ComplexField::new(grid, vals)
}

/// Settings of the minimal-mass experiment beyond the evolution config.
#[derive(Debug, Clone)]
pub struct MinimalMassConfig {
    /// evolution in the rescaled frame; its grid should be the profile grid
    pub evolution: EvolutionConfig,
    /// initial time t₁ < 0
    pub t1: f64,
    /// stop once λ < λ₁ / t_stop_factor
    pub t_stop_factor: f64,
    /// steps between decompositions
    pub decompose_every: usize,
    /// relaxation rate of the frame towards λ_w = 1
    pub frame_kappa: f64,
    /// Morawetz radius A
    pub morawetz_a: f64,
    /// tube-exit threshold on ‖ε‖_{H¹}
    pub tube: f64,
}

impl MinimalMassConfig {
    pub fn new(evolution: EvolutionConfig, t1: f64) -> Self {
        Self { evolution, t1, t_stop_factor: 30.0, decompose_every: 10, frame_kappa: 0.5, morawetz_a: 10.0, tube: 0.3 }
    }
}

#[derive(Debug, Clone)]
pub struct MinimalMassRun {
    pub init: InitData,
    pub t1: f64,
    pub trajectory: Trajectory,
    pub stop: StopReason,
    /// ‖u(t₁)‖₂² − ‖Q‖₂²
    pub mass_defect: f64,
    pub final_state: FieldState,
}

/// s₁ = (|t₁|/C_s)^{−α/(4−α)}
pub fn s_of_t1(law: &LawConstants, t1: f64) -> Result<f64> {
    law.s_of_time(t1)
}

/// Evolve u(t₁) = λ₁^{−d/2}P_{b₁}(x/λ₁) toward the blow-up time.
///
/// The frame follows the decomposition: a = −b/λ_w² + κ ln λ_w with λ_w = λ/L,
/// which is the modulation law d ln λ/dτ = −b/λ_w² plus a relaxation of λ_w to 1.
/// s is accumulated as ∫dτ/λ_w² between decompositions.
pub fn run_minimal_mass(profile: &ProfileCoeffs, law: &LawConstants, cfg: &MinimalMassConfig) -> Result<MinimalMassRun> {
    let ecfg = &cfg.evolution;
    if profile.model() != ecfg.model {
        return Err(Error::Param("profile and evolution models differ".into()));
    }
    if !(cfg.t_stop_factor > 1.0) || cfg.decompose_every == 0 {
        return Err(Error::Param("need t_stop_factor > 1 and decompose_every ≥ 1".into()));
    }
    let s1 = s_of_t1(law, cfg.t1)?;
    let init = init_data(law, s1, LawEnergy::Profile(profile))?;
    let params = LyapunovParams::new(cfg.morawetz_a, profile.grid().clone())?;
    let start = ModState { s: s1, t: cfg.t1, lambda: init.lambda1, b: init.b1, gamma: 0.0 };
    let w0 = analysis::reconstruct(profile, &start, None, ecfg.grid.clone(), init.lambda1)?;
    let mut st = FieldState { t: cfg.t1, tau: 0.0, scale: init.lambda1, w: w0 };
    let mass0 = st.mass();
    let energy0 = st.energy(&ecfg.model, ecfg.g_coefficient());
    let grad0 = st.grad_norm();
    let escale = 0.5 * grad0 * grad0;
    let mut stepper = Stepper::new(ecfg.clone());

    let mut traj = Trajectory::default();
    // (mod state, τ, L) at the previous decomposition
    let mut prev = (start, 0.0, st.scale);
    let mut stop = StopReason::MaxSteps;
    let lambda_stop = init.lambda1 / cfg.t_stop_factor;
    let mut n = 0usize;
    loop {
        let (pm, ptau, pscale) = prev;
        let plw = pm.lambda / pscale;
        let dtau = st.tau - ptau;
        let ds = dtau / (plw * plw);
        let guess = ModState { s: pm.s + ds, t: st.t, lambda: pm.lambda, b: pm.b, gamma: pm.gamma + ds };
        let mut dec = analysis::decompose_scaled(&st.w, st.scale, profile, &guess)?;
        let lw = dec.state.lambda / st.scale;
        // trapezoid in τ
        dec.state.s = pm.s + 0.5 * dtau * (1.0 / (lw * lw) + 1.0 / (plw * plw));
        let ms = dec.state;
        let mon = analysis::monitors(&dec, profile, &params)?;
        traj.points.push(TrajPoint {
            s: ms.s,
            t: ms.t,
            lambda: ms.lambda,
            b: ms.b,
            gamma: ms.gamma,
            grad_norm: st.grad_norm(),
            mass_drift: st.mass() / mass0 - 1.0,
            energy_drift: (st.energy(&ecfg.model, ecfg.g_coefficient()) - energy0) / escale,
            eps_l2: dec.eps_l2,
            eps_h1: dec.eps_h1,
            ortho: dec.ortho_resid.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            modr: [0.0; 3],
            h: mon.h,
            j: mon.j,
            s_lyap: mon.s,
            quad_form: mon.quad_form,
            inner_eps_q: mon.inner_eps_q,
        });
        prev = (ms, st.tau, st.scale);

        if dec.eps_h1 > cfg.tube {
            stop = StopReason::TubeExit;
            break;
        }
        if ms.lambda < lambda_stop {
            stop = StopReason::Reached;
            break;
        }
        if n >= ecfg.max_steps {
            break;
        }
        if !(0.25..4.0).contains(&lw) {
            stop = StopReason::Resolution;
            break;
        }
        let a = -ms.b / (lw * lw) + cfg.frame_kappa * lw.ln();
        for _ in 0..cfg.decompose_every {
            st = stepper.step(&st, a)?;
            n += 1;
        }
        if !(st.t < 0.0) || st.grad_norm() > ecfg.blowup_factor * grad0 {
            stop = StopReason::BlowUp;
            break;
        }
    }
    traj.fill_mod(|b, l| profile.theta(b, l));
    Ok(MinimalMassRun {
        init,
        t1: cfg.t1,
        trajectory: traj,
        stop,
        mass_defect: mass0 - profile.q().norm_sqr(),
        final_state: st,
    })
}
