//! Plane-like minimizers of Ginzburg–Landau type functionals on the
//! Heisenberg group `H^n`.

pub mod analysis;
pub mod energy;
pub mod error;
pub mod grid;
pub mod heis;
pub mod io;
pub mod potential;
pub mod solver;

pub use error::{Error, Result};
