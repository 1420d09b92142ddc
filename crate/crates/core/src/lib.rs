//! Numerical laboratory for degenerate k-Hessian and prescribed k-curvature
//! Dirichlet problems on Euclidean and hyperbolic graphs.

pub mod config;
pub mod error;
pub mod expr;
pub mod graphgeom;
pub mod grid;
pub mod hypgeom;
pub mod run;
pub mod solver;
pub mod symmfunc;
pub mod verify;

pub use error::{Error, Result};
