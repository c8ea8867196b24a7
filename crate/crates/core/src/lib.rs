//! Radial bound states of the nonlinear Schrödinger equation
//! `-Δφ + ωφ - |φ|^{p-1}φ = 0` on a ball, computed either by shooting on
//! the central amplitude or by projected gradient descent on the nodal
//! Nehari set.

pub mod analysis;
pub mod error;
pub mod nehari;
pub mod pipeline;
pub mod problem;
pub mod quadrature;
pub mod shooting;

pub use error::{Result, SolverError};
pub use nehari::{descend, project, NehariOptions, NehariRun};
pub use pipeline::{solve, Method, NehariInit, Solution};
pub use problem::{make_grid, GridFunction, RadialGrid, SolverParams};
pub use quadrature::{decompose, ZeroPolicy};
pub use shooting::{bisect, RkStep, ShootingOptions, ShootingOutcome};
