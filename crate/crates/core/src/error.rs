use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tilt gamma0 = {gamma0} is not below gamma0* = {gamma0_star}")]
    TiltOutOfRange { gamma0: f64, gamma0_star: f64 },
    #[error("quadrature overflow: {0}")]
    QuadratureOverflow(String),
    #[error("Newton solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("grids do not match")]
    GridMismatch,
    #[error("degenerate sample: all draws coincide")]
    DegenerateSample,
    #[error("direction is not a unit vector (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("scattering direction undefined for coinciding velocities")]
    DegeneratePair,
    #[error("pair rate {rate} exceeds declared bound {bound}")]
    RateBoundViolated { rate: f64, bound: f64 },
    #[error("variational objective is not finite")]
    NonFiniteObjective,
    #[error("dilation factor could not be bracketed")]
    AlphaNotFound,
    #[error("no scan point dominates all path energies")]
    EmptyFeasible,
    #[error("h recursion negative on mass {mass:e}")]
    NegativeDensity { mass: f64 },
    #[error("event too rare: {hits} hits")]
    EventTooRare { hits: usize },
    #[error("effective sample size {ess:.2} below 10")]
    WeightDegenerate { ess: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
