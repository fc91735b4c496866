use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("moment system for q = {q} is ill-conditioned (1-norm condition estimate {condition:.3e})")]
    IllConditioned { q: u32, condition: f64 },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("point (eps = {eps:e}, x = {x:?}) lies outside the partial domain of test object `{path}`")]
    OutsidePartialDomain { path: String, eps: f64, x: Vec<f64> },

    #[error("formalism mismatch: {left} vs {right}")]
    FormalismMismatch { left: &'static str, right: &'static str },

    #[error("direction {index} is not in the zero-mass tangent space (integral {integral:e})")]
    NotZeroMass { index: usize, integral: f64 },

    #[error("value overflow: {0}")]
    Overflow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Whether the error comes from leaving an admissible domain.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::OutsidePartialDomain { .. })
    }
}
