use thiserror::Error;

/// Errors raised across the numeric modules.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (best estimate {estimate:e}, error bound {error:e})"
    )]
    NonConvergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("unsupported pairing: {0}")]
    UnsupportedPairing(String),

    #[error("weak characteristic function is degenerate at the origin (|cf(0)| = {0:e})")]
    DegenerateCf(f64),

    #[error("observation variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("model does not provide {0}")]
    MissingCapability(&'static str),

    #[error("bin {0} carries negligible probability")]
    EmptyBin(usize),

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("sensitivity matrix is singular (|det S| = {0:e})")]
    SingularSensitivity(f64),

    #[error("variability matrix is singular")]
    SingularVariability,

    #[error("GMM weight matrix is ill-conditioned (condition number {0:e})")]
    SingularWeight(f64),

    #[error("empirical characteristic function modulus {modulus:e} is below the noise level {threshold:e}")]
    DegenerateModulus { modulus: f64, threshold: f64 },

    #[error("interval probability {0:e} is degenerate")]
    DegenerateProbability(f64),

    #[error("estimate reached the parameter boundary: {0}")]
    Boundary(String),

    #[error("data are degenerate: {0}")]
    DegenerateData(String),

    #[error("nuisance information matrix is singular")]
    SingularNuisance,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
