//! Geometric mechanics for degenerate Lagrangian systems with linear velocity
//! constraints: Lagrange-Dirac dynamics as a semi-explicit DAE, Dirac-style
//! Hamilton-Jacobi verification and flow, and Chaplygin-type reduction with
//! reconstruction.

pub mod autodiff;
pub mod chaplygin;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod hj;
pub mod integrator;
pub mod io;
pub mod linalg;
pub mod plot;
pub mod systems;

pub use error::{Error, Result};
