use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("not a projector (deviation {0:.3e})")]
    NotProjector(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("tensor space dimension {dim} exceeds cap {cap}")]
    SizeCap { dim: usize, cap: usize },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("time grids differ")]
    GridMismatch,

    #[error("history set is not exclusive: {0}")]
    NotExclusive(String),

    #[error("history set is not exhaustive (deviation {0:.3e})")]
    NotExhaustive(f64),

    #[error("overlap below tolerance ({0:.3e})")]
    ZeroOverlap(f64),

    #[error("truncation inadequate: |z|^2 = {norm_sq:.3} exceeds limit {limit:.3}")]
    Truncation { norm_sq: f64, limit: f64 },

    #[error("point outside the valid phase-space region: r^2 = {r2:.3}, limit {limit:.3}")]
    Region { r2: f64, limit: f64 },

    #[error("boundary condition violated: |z| = {0:.3e}")]
    Boundary(f64),

    #[error("correlator cross-check residual {residual:.3e} above threshold {threshold:.3e}")]
    Residual { residual: f64, threshold: f64 },

    #[error("negative probability {0:.3e}")]
    NegativeProbability(f64),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
