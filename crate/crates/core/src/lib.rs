//! Pseudo-spectral simulation and numerical verification for the
//! compressible Navier-Stokes-Korteweg system with zero sound speed,
//! written in momentum form for the perturbation `(a, m)` around `rho = 1`.

pub mod error;
pub mod field;
pub mod grid;
pub mod ops;

pub use error::{NskError, Result};
pub use field::{SpectralField, State};
pub use grid::Grid;
pub mod snapshot;
pub mod besov;
pub mod linear;
pub mod physics;
pub mod solver;
pub mod asymptotics;
pub mod harness;
pub mod acceptance;
