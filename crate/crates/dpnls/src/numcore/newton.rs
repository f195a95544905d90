//! Damped Newton iteration with backtracking on the residual sup-norm.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest damping factor tried before giving up.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, min_step: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

/// Solve residual(x) = 0. `step(x, r)` must return the Newton correction δ with J(x) δ = r.
pub fn newton_solve(
    residual: impl Fn(&[f64]) -> Vec<f64>,
    step: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
    x0: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonReport> {
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    let mut rn = sup(&r);
    for it in 0..opts.max_iter {
        if rn < opts.tol {
            return Ok(NewtonReport { x, iterations: it, residual: rn });
        }
        let dx = step(&x, &r)?;
        let mut lam = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - lam * b).collect();
            let rt = residual(&xt);
            let rtn = sup(&rt);
            if rtn < (1.0 - 1e-4 * lam) * rn || (lam == 1.0 && rtn < opts.tol) {
                x = xt;
                r = rt;
                rn = rtn;
                break;
            }
            lam *= 0.5;
            if lam < opts.min_step {
                return Err(Error::LineSearch { iteration: it, residual: rn });
            }
        }
    }
    if rn < opts.tol {
        return Ok(NewtonReport { x, iterations: opts.max_iter, residual: rn });
    }
    Err(Error::NewtonMaxIter { iterations: opts.max_iter, residual: rn })
}
