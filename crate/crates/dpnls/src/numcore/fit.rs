//! Least-squares line fits and a bracketed scalar root finder.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// coefficient of determination
    pub r2: f64,
    /// standard error of the slope
    pub slope_err: f64,
}

/// y ≈ slope·x + intercept.
pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Param(format!("line fit needs ≥ 2 matched points, got {}/{}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::Param("line fit: degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_err = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit { slope, intercept, r2, slope_err })
}

/// Root of f in [a, b] (sign change required), Illinois false position.
pub fn find_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa * fb < 0.0) {
        return Err(Error::Root(format!("no sign change: f({a:e}) = {fa:e}, f({b:e}) = {fb:e}")));
    }
    let mut side = 0;
    for _ in 0..max_iter {
        let c = (a * fb - b * fa) / (fb - fa);
        // fall back to bisection if the secant point is unusable
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < xtol * (1.0 + c.abs()) {
            return Ok(c);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            side = 0;
        } else {
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        b = c;
        fb = fc;
        if (b - a).abs() < xtol * (1.0 + b.abs()) {
            return Ok(b);
        }
    }
    Err(Error::Root(format!("no convergence in {max_iter} iterations, bracket [{a:e}, {b:e}]")))
}
