use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown system family `{0}`")]
    UnknownSystem(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of integration steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("energy drift {drift:.3e} exceeds limit {limit:.3e} at t = {t:.6}")]
    EnergyDrift { drift: f64, limit: f64, t: f64 },

    #[error("U = A + iB is numerically singular at t = {t:.6} (|det U| = {det:.3e})")]
    SingularU { t: f64, det: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Poincaré section is not transversal to the flow at the seed")]
    NotTransversal,

    #[error(
        "degenerate orbit: eigenvalue 1 of the monodromy has multiplicity {multiplicity} \
         (manifolds of periodic orbits are not supported)"
    )]
    DegenerateOrbit { multiplicity: usize },

    #[error("Maslov phase {phase:.6} is not a multiple of pi/2 (off by {offset:.3e})")]
    BranchTracking { phase: f64, offset: f64 },

    #[error("grid rejected: {0}")]
    Grid(String),

    #[error("boundary reflection: mass {mass:.3e} within the edge layer")]
    BoundaryReflection { mass: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("quadratic form has no positive-definite real part")]
    NotPositiveDefinite,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
