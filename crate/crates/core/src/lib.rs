//! Kac walk simulation and numerical large-deviation functionals.
//!
//! The crate is organised bottom-up: [`measures`] holds reference measures,
//! exponential tilts and static rate functionals; [`microcanonical`] samples
//! configurations on the energy/momentum shell; [`kac`] simulates the
//! hard-sphere Kac walk; [`observables`] turns trajectories into empirical
//! measures and flows; [`rates`] evaluates dynamical and combined rate
//! functionals on discretized pairs; [`luw`] builds Lu–Wennberg approximating
//! paths.

pub mod error;
pub mod kac;
pub mod luw;
pub mod measures;
pub mod microcanonical;
pub mod observables;
pub mod quad;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod vecops;

/// Crate version, recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
