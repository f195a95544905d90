//! Shared numerical substrate.

pub mod banded;
pub mod csv;
pub mod field;
pub mod fit;
pub mod grid;
pub mod interp;
pub mod newton;
pub mod ode;
pub mod quad;
pub mod scalar;

pub use banded::{BandedLu, BandedMatrix};
pub use field::{ComplexField, RadialField, RealField};
pub use fit::{find_root, line_fit, LineFit};
pub use grid::{sphere_area, RadialGrid};
pub use interp::InterpPlan;
pub use newton::{newton_solve, NewtonOptions, NewtonReport};
pub use ode::{dopri5, OdeOptions, OdeSolution};
pub use quad::{gauss_legendre_unit, integrate_adaptive};
pub use scalar::Scalar;

use crate::error::Result;

/// Solve A x = rhs for a banded operator, verifying the relative residual.
///
/// Fails when ‖Ax − rhs‖∞ / ‖rhs‖∞ ≥ 1e−10.
pub fn solve_linear_radial(a: &BandedMatrix<f64>, rhs: &RealField) -> Result<RealField> {
    let x = a.factor()?.solve(rhs.values());
    let (rn, bn) = a.residual_norms(&x, rhs.values());
    if bn > 0.0 && rn / bn >= 1e-10 {
        return Err(crate::error::Error::Residual(rn / bn));
    }
    Ok(rhs.with_values(x))
}

/// −Δ_h + c as a banded matrix on `grid`.
pub fn helmholtz(grid: &RadialGrid, c: f64) -> BandedMatrix<f64> {
    grid.laplacian().scaled(-1.0).plus_diag(&vec![c; grid.len()])
}
