use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fractional order alpha = {0} is outside the open interval (0, 2)")]
    InvalidOrder(f64),

    #[error("dimension n = {0} is not supported (expected 1..=3)")]
    InvalidDimension(usize),

    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid region parameters: {0}")]
    InvalidRegionParams(String),

    #[error("point {0:?} is not in the open half-space x1 > {1}")]
    OutsideHalfSpace(Vec<f64>, f64),

    #[error("singular input: evaluation and integration points coincide")]
    SingularInput,

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("field `{0}` carries no decay metadata")]
    MissingDecay(String),

    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("periodic box too small: {0}")]
    BoxTooSmall(String),

    #[error("invalid quadrature spec: {0}")]
    InvalidQuadSpec(String),

    #[error("cannot fit exponent: {0}")]
    Fit(String),

    #[error("need at least {need} converged rows, got {got}")]
    InsufficientRows { need: usize, got: usize },

    #[error("no starting plane: min of w at lambda = {lambda} is {min}")]
    NoStartingPlane { lambda: f64, min: f64 },

    #[error("closed-form half-space integral disagrees with quadrature (relative gap {0:e})")]
    ClosedFormMismatch(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
