use thiserror::Error;

/// Errors raised across tabulation, solving, policy evaluation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("unbounded horizon at state {state}: t* is infinite and no positive lower rate bound is available")]
    UnboundedHorizon { state: String },

    #[error("numerical breakdown in simplex: {0}")]
    NumericalBreakdown(String),

    #[error("LP is infeasible (no strategy meets the limits)")]
    Infeasible,

    #[error("LP is unbounded")]
    Unbounded { ray: Vec<f64> },

    #[error("discounted series diverges: spectral radius {0} of the policy kernel is not below 1")]
    SeriesDivergence(f64),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("{} (line {}, column {})", e, e.line(), e.column()))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
