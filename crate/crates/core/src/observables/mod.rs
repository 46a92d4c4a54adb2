//! Empirical measures and flows of trajectories, reference flows, and the
//! balance-equation residual.

mod bins;
mod flowfn;
mod histogram;
mod paths;

pub use bins::*;
pub use flowfn::*;
pub use histogram::*;
pub use paths::*;
