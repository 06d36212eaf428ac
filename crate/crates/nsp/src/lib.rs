//! Spherically symmetric compressible Navier–Stokes–Poisson flow with a
//! vacuum free boundary: polytropic equilibria, critical-mass bounds, a
//! Lagrangian mass-coordinate solver and the inequality checks run on its
//! output.

pub mod diagnostics;
pub mod error;
pub mod io;
pub mod mass_bounds;
pub mod model;
pub mod solver;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{GasModel, LagrangianState};
pub use solver::{run, SolverConfig, TimeSeries};
pub use stationary::{solve_lane_emden, InitialData, LaneEmdenProfile};
