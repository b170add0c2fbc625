use thiserror::Error;

pub type Result<T> = std::result::Result<T, FemError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh too large: {0} subdivisions overflow index arithmetic")]
    MeshTooLarge(usize),
    #[error("offset {0} exceeds inradius 0.5")]
    OffsetExceedsInradius(f64),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite data value at {0}")]
    NonFinite(String),
    #[error("point ({0}, {1}) lies outside the mesh")]
    PointNotFound(f64, f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not positive definite (penalty too small): pivot {index} = {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("singular system (unstable configuration): zero pivot at {index}")]
    Singular { index: usize },
    #[error("residual certification failed: relative residual {residual:e} > {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
}
