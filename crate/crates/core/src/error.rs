use thiserror::Error;

use crate::geometry::IndexSet;

/// Errors raised anywhere in the probability pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HgmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("normal vector of half-space {0} is zero")]
    ZeroNormal(usize),
    #[error("non-finite entry in input")]
    NonFiniteEntry,
    #[error("at most 64 half-spaces are supported, got {0}")]
    TooManyHalfspaces(usize),
    #[error("index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("Gram matrix of {0} is numerically singular")]
    SingularGram(IndexSet),
    #[error("LP did not terminate within {0} pivots")]
    LpNumericalFailure(usize),
    #[error("point is not on the hyperplane of {set} (residual {residual:e})")]
    NotOnHyperplane { set: IndexSet, residual: f64 },
    #[error("polyhedron is unbounded")]
    UnboundedPolyhedron,
    #[error("general position check failed for {0:?}")]
    GeneralPositionFailure(Vec<IndexSet>),
    #[error("cone method needs a square normal matrix, got {d}x{n}")]
    NotSquare { d: usize, n: usize },
    #[error("normal vectors are linearly dependent")]
    SingularNormals,
    #[error("zero diagonal entry {0} in triangular normal matrix")]
    ZeroDiagonal(usize),
    #[error("step size fell below h_min at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("exceeded {0} integration steps")]
    MaxStepsExceeded(usize),
    #[error("no applicable method: {0}")]
    NoApplicableMethod(String),
    #[error("quadrature oracle supports d <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, HgmError>;
