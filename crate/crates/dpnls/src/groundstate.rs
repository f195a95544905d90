//! Ground state Q of −ΔQ + Q − Q^{1+4/d} = 0 and the small solitary waves
//! Q_M of the double-power problem (positive minimisers of E at fixed mass).

use crate::error::{Error, Result};
use crate::model::{big_f, energy, f_crit, g_pow, int_f, Model};
use crate::numcore::{newton_solve, BandedMatrix, ComplexField, NewtonOptions, RadialGrid, RealField};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct GroundState {
    field: RealField,
    omega: f64,
    /// Subcritical power when the solution carries the |Q|^{p-1}Q term.
    p: Option<f64>,
    /// ‖Q‖₂²
    pub mass: f64,
    /// ‖∇Q‖₂²
    pub grad2: f64,
    /// ∫|y|²Q²
    pub yq2: f64,
}

/// 3^{1/4} sech^{1/2}(2x), the one-dimensional ground state.
pub fn exact_q_1d(x: f64) -> f64 {
    3f64.powf(0.25) / (2.0 * x).cosh().sqrt()
}

fn residual_vec(grid: &RadialGrid, omega: f64, p: Option<f64>, q: &[f64]) -> Vec<f64> {
    let lap = grid.laplacian().matvec(q);
    let d = grid.dim();
    q.iter()
        .zip(&lap)
        .map(|(&u, &l)| -l + omega * u - f_crit(d, u) - p.map_or(0.0, |p| g_pow(p, u)))
        .collect()
}

fn jacobian(grid: &RadialGrid, omega: f64, p: Option<f64>, q: &[f64]) -> BandedMatrix<f64> {
    let k = 4.0 / grid.dim() as f64;
    let diag: Vec<f64> = q
        .iter()
        .map(|u| omega - (1.0 + k) * u.abs().powf(k) - p.map_or(0.0, |p| p * u.abs().powf(p - 1.0)))
        .collect();
    grid.laplacian().scaled(-1.0).plus_diag(&diag)
}

impl GroundState {
    fn from_values(grid: Arc<RadialGrid>, values: Vec<f64>, omega: f64, p: Option<f64>) -> Result<Self> {
        let field = RealField::new(grid, values)?;
        let mass = field.norm_sqr();
        let grad2 = field.grad_norm_sqr();
        let yq2 = field.map_r(|r, v| r * v).norm_sqr();
        Ok(Self { field, omega, p, mass, grad2, yq2 })
    }

    pub fn field(&self) -> &RealField {
        &self.field
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.field.grid()
    }
    pub fn dim(&self) -> usize {
        self.field.grid().dim()
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn p(&self) -> Option<f64> {
        self.p
    }
    /// ‖Q‖₂
    pub fn l2(&self) -> f64 {
        self.mass.sqrt()
    }

    /// ∫|Q|^q
    pub fn p_norm(&self, q: f64) -> f64 {
        self.field.grid().integrate(&self.field.values().iter().map(|v| v.abs().powf(q)).collect::<Vec<_>>())
    }

    /// Sup norm of the discrete elliptic residual.
    pub fn residual(&self) -> f64 {
        residual_vec(self.grid(), self.omega, self.p, self.field.values()).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// |½‖∇Q‖² − ∫F(Q)| / (½‖∇Q‖²).
    pub fn pohozaev_defect(&self) -> f64 {
        let d = self.dim();
        let int_f: f64 = self
            .grid()
            .integrate(&self.field.values().iter().map(|v| big_f(d, v.abs())).collect::<Vec<_>>());
        (0.5 * self.grad2 - int_f).abs() / (0.5 * self.grad2)
    }

    pub fn is_positive_decreasing(&self) -> bool {
        let v = self.field.values();
        v.iter().all(|&x| x > 0.0) && v.windows(2).all(|w| w[1] < w[0])
    }

    /// Energy with the subcritical term switched on (ε = +1) when present.
    pub fn energy(&self) -> f64 {
        let u = self.field.to_complex();
        match self.p {
            Some(p) => energy(&Model { d: self.dim(), p }, 1.0, &u),
            None => 0.5 * self.grad2 - int_f(self.dim(), &u),
        }
    }

    /// `d,p,mass,grad2,yQ2,omega`; p is empty for the critical ground state.
    pub fn csv_row(&self) -> String {
        use crate::numcore::csv::fmt17;
        format!(
            "{},{},{},{},{},{}",
            self.dim(),
            self.p.map(fmt17).unwrap_or_default(),
            fmt17(self.mass),
            fmt17(self.grad2),
            fmt17(self.yq2),
            fmt17(self.omega)
        )
    }
}

fn newton_profile(grid: &RadialGrid, omega: f64, p: Option<f64>, seed: Vec<f64>) -> Result<Vec<f64>> {
    let opts = NewtonOptions { tol: 1e-9, max_iter: 60, min_step: 1e-3 };
    let rep = newton_solve(
        |q| residual_vec(grid, omega, p, q),
        |q, r| jacobian(grid, omega, p, q).solve(r),
        &seed,
        opts,
    )?;
    // a few extra full steps polish to round-off level
    let mut q = rep.x;
    for _ in 0..3 {
        let r = residual_vec(grid, omega, p, &q);
        let dq = jacobian(grid, omega, p, &q).solve(&r)?;
        let trial: Vec<f64> = q.iter().zip(&dq).map(|(a, b)| a - b).collect();
        let rt = residual_vec(grid, omega, p, &trial);
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if sup(&rt) < sup(&r) {
            q = trial;
        } else {
            break;
        }
    }
    Ok(q)
}

/// Petviashvili iteration u ← M(u)^γ (−Δ+1)⁻¹ f(u); it cannot collapse onto
/// the zero solution, so it supplies Newton with a seed inside the basin.
fn petviashvili(grid: &RadialGrid, seed: Vec<f64>, iters: usize) -> Result<Vec<f64>> {
    let d = grid.dim();
    let k = 4.0 / d as f64;
    let gamma = (1.0 + k) / k;
    let op = grid.laplacian().scaled(-1.0).plus_diag(&vec![1.0; grid.len()]);
    let lu = op.factor()?;
    let w = grid.weights();
    let mut u = seed;
    for _ in 0..iters {
        let fu: Vec<f64> = u.iter().map(|&v| f_crit(d, v)).collect();
        let lu_u = op.matvec(&u);
        let num: f64 = lu_u.iter().zip(&u).zip(w).map(|((a, b), c)| a * b * c).sum();
        let den: f64 = fu.iter().zip(&u).zip(w).map(|((a, b), c)| a * b * c).sum();
        if !(den > 0.0) {
            return Err(Error::Stagnation("Petviashvili iteration lost positivity".into()));
        }
        let m = (num / den).powf(gamma);
        u = lu.solve(&fu).into_iter().map(|v| m * v).collect();
    }
    Ok(u)
}

/// Positive radial ground state of −ΔQ + Q − Q^{1+4/d} = 0 on `grid`.
pub fn solve_q(d: usize, grid: Arc<RadialGrid>) -> Result<GroundState> {
    if grid.dim() != d {
        return Err(Error::Dimension(d));
    }
    let mut last = Error::Stagnation("no seed tried".into());
    for c in [1.5, 2.0, 3.0, 1.0, 4.0, 6.0] {
        let gauss: Vec<f64> = grid.nodes().iter().map(|r| c * (-r * r / 2.0).exp()).collect();
        let seed = match petviashvili(&grid, gauss, 40) {
            Ok(s) => s,
            Err(e) => {
                last = e;
                continue;
            }
        };
        match newton_profile(&grid, 1.0, None, seed) {
            Ok(q) if q[0] > 0.5 && q.iter().all(|&v| v > -1e-10) => {
                return GroundState::from_values(grid, q, 1.0, None);
            }
            Ok(_) => last = Error::Stagnation(format!("seed amplitude {c} reached a trivial or sign-changing state")),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Options for the constrained minimisation producing Q_M.
#[derive(Debug, Clone, Copy)]
pub struct QmOptions {
    pub max_flow_iter: usize,
    pub flow_tol: f64,
    pub newton_tol: f64,
}

impl Default for QmOptions {
    fn default() -> Self {
        Self { max_flow_iter: 20_000, flow_tol: 1e-5, newton_tol: 1e-11 }
    }
}

fn nonlin(model: &Model, u: f64) -> f64 {
    f_crit(model.d, u) + g_pow(model.p, u)
}

/// Minimiser of E(u) = ½‖∇u‖² − ∫F(u) − ∫G(u) subject to ‖u‖₂ = `m`.
///
/// `q_l2` is ‖Q‖₂ for the critical ground state; `m` must lie in (0, q_l2).
pub fn solve_qm(model: Model, m: f64, q_l2: f64, grid: Arc<RadialGrid>, opts: QmOptions) -> Result<GroundState> {
    if grid.dim() != model.d {
        return Err(Error::Dimension(model.d));
    }
    if !(m > 0.0 && m < q_l2) {
        return Err(Error::Param(format!("target L2 norm {m} must lie in (0, {q_l2})")));
    }
    let w = grid.weights().to_vec();
    let mass = |u: &[f64]| u.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>();
    let normalize = |u: &mut Vec<f64>| {
        let s = m / mass(u).sqrt();
        u.iter_mut().for_each(|v| *v *= s);
    };
    let energy_of = |u: &[f64]| -> f64 {
        let f = RealField::new(grid.clone(), u.to_vec()).expect("grid length").to_complex();
        energy(&model, 1.0, &f)
    };
    // normalised, preconditioned gradient descent on the mass sphere
    let mut u: Vec<f64> = grid.nodes().iter().map(|r| (-r * r / 18.0).exp()).collect();
    normalize(&mut u);
    let lap = grid.laplacian();
    let mut e = energy_of(&u);
    let mut tau = 0.5;
    let mut shift = 1.0;
    let mut pre = lap.scaled(-1.0).plus_diag(&vec![shift; u.len()]).factor()?;
    let mut converged = false;
    for it in 0..opts.max_flow_iter {
        let lu = lap.matvec(&u);
        let grad: Vec<f64> = u.iter().zip(&lu).map(|(&v, &l)| -l - nonlin(&model, v)).collect();
        let omega = -grad.iter().zip(&u).zip(&w).map(|((g, v), ww)| g * v * ww).sum::<f64>() / (m * m);
        let r: Vec<f64> = grad.iter().zip(&u).map(|(g, v)| g + omega * v).collect();
        let rn = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if rn < opts.flow_tol {
            converged = true;
            break;
        }
        if it % 200 == 0 {
            let s = omega.clamp(1e-3, 1.0);
            if (s - shift).abs() > 0.2 * shift {
                shift = s;
                pre = lap.scaled(-1.0).plus_diag(&vec![shift; u.len()]).factor()?;
            }
        }
        let dir = pre.solve(&r);
        loop {
            let mut trial: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a - tau * b).collect();
            normalize(&mut trial);
            let et = energy_of(&trial);
            if et <= e {
                u = trial;
                e = et;
                tau = (tau * 1.2).min(4.0);
                break;
            }
            tau *= 0.5;
            if tau < 1e-12 {
                return Err(Error::Stagnation(format!("gradient flow stalled at iteration {it}, residual {rn:e}")));
            }
        }
    }
    if !converged {
        return Err(Error::Stagnation(format!("gradient flow did not reach {:e}", opts.flow_tol)));
    }
    // Newton polish on (u, ω) with the mass constraint appended
    let n = u.len();
    let lu = lap.matvec(&u);
    let omega0 = u.iter().zip(&lu).zip(&w).map(|((&v, &l), ww)| (l + nonlin(&model, v)) * v * ww).sum::<f64>() / (m * m);
    let mut x = u.clone();
    x.push(omega0);
    let res = |x: &[f64]| -> Vec<f64> {
        let (u, om) = (&x[..n], x[n]);
        let mut r = residual_vec(&grid, om, Some(model.p), u);
        r.push(0.5 * (mass(u) - m * m));
        r
    };
    let step = |x: &[f64], r: &[f64]| -> Result<Vec<f64>> {
        let (u, om) = (&x[..n], x[n]);
        let lu = jacobian(&grid, om, Some(model.p), u).factor()?;
        let a = lu.solve(&r[..n]);
        let c = lu.solve(u);
        let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).zip(&w).map(|((a, b), ww)| a * b * ww).sum::<f64>();
        let dom = (dot(u, &a) - r[n]) / dot(u, &c);
        let mut dx: Vec<f64> = a.iter().zip(&c).map(|(a, c)| a - dom * c).collect();
        dx.push(dom);
        Ok(dx)
    };
    let rep = newton_solve(res, step, &x, NewtonOptions { tol: opts.newton_tol, max_iter: 30, min_step: 1e-3 })?;
    x = rep.x;
    let omega = x.pop().expect("omega appended");
    if x[0] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    GroundState::from_values(grid, x, omega, Some(model.p))
}

/// E_crit(u) − ½‖∇u‖₂²[1 − (‖u‖₂/‖Q‖₂)^{4/d}], non-negative by the sharp
/// Gagliardo–Nirenberg inequality.
pub fn gn_defect(u: &ComplexField, gs: &GroundState) -> f64 {
    let d = u.grid().dim();
    let g2 = u.grad_norm_sqr();
    let e_crit = 0.5 * g2 - int_f(d, u);
    e_crit - 0.5 * g2 * (1.0 - (u.norm() / gs.l2()).powf(4.0 / d as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(1, 1024, 30.0).unwrap())
    }

    #[test]
    fn q_1d_matches_sech() {
        let gs = solve_q(1, grid1()).unwrap();
        let err = gs
            .grid()
            .nodes()
            .iter()
            .zip(gs.field().values())
            .map(|(r, v)| (v - exact_q_1d(*r)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
        assert!(gs.residual() < 1e-9);
        assert!(gs.is_positive_decreasing());
    }

    #[test]
    fn rejects_supercritical_mass() {
        let g = grid1();
        let e = solve_qm(Model::new(1, 3.0).unwrap(), 2.0, 1.5, g, QmOptions::default());
        assert!(e.is_err());
    }
}
