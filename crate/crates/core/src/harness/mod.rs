//! Simulation, I/O and evaluation utilities behind the CLI.

pub mod eval;
pub mod io;
pub mod ols;
pub mod sim;
pub mod sweep;
