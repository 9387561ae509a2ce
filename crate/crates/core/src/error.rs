use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("SVD of {rows}x{cols} matrix did not converge within {iterations} iterations")]
    SvdNoConvergence {
        rows: usize,
        cols: usize,
        iterations: usize,
    },

    #[error("matrix is rank deficient: smallest singular value {sigma_min:e} is below the rank tolerance")]
    RankDeficient { sigma_min: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel integral diverges in dimension {d}: s = {s} must exceed d/2")]
    Divergence { d: usize, s: f64 },

    #[error("activation {name} is not bi-Lipschitz: derivative lower bound {min_derivative:e} is not positive")]
    NotBiLipschitz { name: String, min_derivative: f64 },

    #[error("invalid network: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("{variant} bound is inapplicable at layer {layer}: {reason}")]
    Inapplicable {
        variant: String,
        layer: usize,
        reason: String,
    },

    #[error("undefined angle: {0}")]
    UndefinedAngle(String),

    #[error("weight class is infeasible: no admissible matrix after {attempts} rejection attempts")]
    Infeasible { attempts: usize },

    #[error("non-finite value in layer {layer}: {what}")]
    NonFinite { layer: usize, what: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
