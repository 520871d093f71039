use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The adaptive quadrature ran out of subdivisions; `estimate` is the best
    /// value reached and `error` its estimated absolute error.
    #[error("quadrature did not converge (estimate {estimate}, error {error:e})")]
    Convergence { estimate: f64, error: f64 },

    #[error("no solution: target {target} outside attainable range [{low}, {high}]")]
    NoSolution { target: f64, low: f64, high: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    /// A dataset invariant failed; `field` names the offending descriptor key.
    #[error("invalid dataset: `{field}`: {message}")]
    InvalidDataset { field: &'static str, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
