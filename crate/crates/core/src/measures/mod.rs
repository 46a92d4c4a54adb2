//! Reference measures, exponential tilting, log-moment generating functions,
//! Cramér and microcanonical Sanov rate functionals on velocity grids.

mod base;
mod grid;
pub(crate) mod newton;
mod tilt;

pub use base::{BaseMeasure, Family, MacroState, TiltStats, TiltVector, TOL_QUAD};
pub use grid::{GridDensity, GridSpec};
pub use newton::{MAX_ITER, TOL_NEWTON};
pub use tilt::*;
