//! Simulation and verification laboratory for random walks in space-time
//! i.i.d. random environments.

pub mod cli;
pub mod corrector;
pub mod dp;
pub mod env;
mod error;
pub mod lattice;
pub mod report;
pub mod rng;
pub mod stats;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{Site, MAX_NU};
