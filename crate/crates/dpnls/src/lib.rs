//! Radial numerics for minimal-mass blow-up in the double-power NLS
//!
//! i∂_t u + Δu + |u|^{4/d}u + ε|u|^{p-1}u = 0,  1 < p < 1 + 4/d.

pub mod analysis;
pub mod error;
pub mod evolve;
pub mod groundstate;
pub mod linops;
pub mod model;
pub mod numcore;
pub mod profile;
pub mod reducedlaw;

pub use error::{Error, Result};
pub use model::Model;
