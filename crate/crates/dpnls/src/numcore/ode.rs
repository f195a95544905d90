//! Dormand–Prince 5(4) with PI step control and continuous output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12, h0: 1e-3, max_steps: 1_000_000 }
    }
}

/// One accepted step with its interpolation data.
#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl Step {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Fifth-order dense output at t ∈ [t0, t0+h].
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        (0..r[0].len())
            .map(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub steps: Vec<Step>,
}

impl OdeSolution {
    /// Dense output anywhere inside the integrated range.
    pub fn at(&self, t: f64) -> Option<Vec<f64>> {
        let (lo, hi) = (self.t[0], *self.t.last()?);
        if (t - lo) * (t - hi) > 0.0 {
            return None;
        }
        if self.steps.is_empty() {
            return Some(self.y[0].clone());
        }
        let fwd = hi >= lo;
        let k = self.steps.partition_point(|s| if fwd { s.t1() < t } else { s.t1() > t });
        Some(self.steps[k.min(self.steps.len() - 1)].eval(t))
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrate y' = f(t, y) from t0 to t1 (either direction).
pub fn dopri5(
    f: impl Fn(f64, &[f64]) -> Vec<f64>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: OdeOptions,
) -> Result<OdeSolution> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h0.abs().min((t1 - t0).abs()) * dir;
    let mut sol = OdeSolution { t: vec![t0], y: vec![y.clone()], steps: Vec::new() };
    let mut k1 = f(t, &y);
    let mut err_old: f64 = 1e-4;
    let beta = 0.04;
    let expo = 0.2 - 0.75 * beta;
    let mut steps = 0;
    while (t1 - t) * dir > 0.0 {
        if steps >= opts.max_steps {
            return Err(Error::StepSize(t));
        }
        steps += 1;
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k: Vec<Vec<f64>> = vec![k1.clone()];
        let mut ynew = vec![0.0; n];
        for s in 1..7 {
            let ys: Vec<f64> = (0..n).map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>()).collect();
            if s == 6 {
                ynew = ys.clone();
            }
            k.push(f(t + C[s] * h, &ys));
        }
        let mut err = 0.0;
        for i in 0..n {
            let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            if h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSize(t));
            }
            continue;
        }
        if err <= 1.0 {
            let fac = (0.9 * err_old.powf(beta) / err.max(1e-10).powf(expo)).clamp(0.2, 10.0);
            let r0 = y.clone();
            let r1: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
            let r2: Vec<f64> = (0..n).map(|i| h * k[0][i] - r1[i]).collect();
            let r3: Vec<f64> = (0..n).map(|i| r1[i] - h * k[6][i] - r2[i]).collect();
            let r4: Vec<f64> = (0..n).map(|i| h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>()).collect();
            sol.steps.push(Step { t0: t, h, rcont: [r0, r1, r2, r3, r4] });
            t += h;
            if (t1 - t) * dir <= 1e-15 * t1.abs().max(1.0) {
                t = t1;
            }
            y = ynew;
            k1 = k.swap_remove(6);
            sol.t.push(t);
            sol.y.push(y.clone());
            err_old = err.max(1e-4);
            h *= fac;
        } else {
            h *= (0.9 / err.powf(expo)).max(0.2);
            if h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSize(t));
            }
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_and_dense_output() {
        let sol = dopri5(|_, y| vec![y[1], -y[0]], 0.0, &[1.0, 0.0], 10.0, OdeOptions::default()).unwrap();
        let y = sol.y.last().unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        for t in [0.37, 2.5, 7.77] {
            let v = sol.at(t).unwrap();
            assert!((v[0] - t.cos()).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn backward_integration() {
        let sol = dopri5(|_, y| vec![y[0]], 1.0, &[1.0], 0.0, OdeOptions::default()).unwrap();
        assert!((sol.y.last().unwrap()[0] - (-1f64).exp()).abs() < 1e-11);
        assert!((sol.at(0.5).unwrap()[0] - (-0.5f64).exp()).abs() < 1e-11);
    }
}
