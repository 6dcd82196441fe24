//! Error types shared by the geometry, map, kernel, and energy modules.

use thiserror::Error;

/// Errors produced by the core numerical operations.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// A point lies outside the declared domain.
    #[error("point {point:?} is outside the domain: {detail}")]
    OutsideDomain { point: Vec<f64>, detail: String },

    /// A radius or other scale parameter is not usable.
    #[error("invalid radius {radius}: {detail}")]
    InvalidRadius { radius: f64, detail: String },

    /// A parameter fails a precondition (range, sign, ordering).
    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    /// The requested ambient dimension is not supported.
    #[error("ambient dimension {dim} is not supported: {detail}")]
    UnsupportedDimension { dim: usize, detail: String },

    /// A ball or region of zero measure where positive measure is required.
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    /// A region description is empty or inconsistent with the space.
    #[error("invalid region: {0}")]
    InvalidRegion(String),

    /// Map/target combination for which the requested quantity does not exist.
    #[error("unsupported target: {0}")]
    UnsupportedTarget(String),

    /// Operation requires a smooth map with a Jacobian.
    #[error("smoothness required: {0}")]
    SmoothnessRequired(String),

    /// Mismatched dimensions between a map, a space, or a vector argument.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Quantity that is only defined for admissible mollifier families.
    #[error("not an admissible family: {0}")]
    NotAdmissible(String),

    /// Too few samples or an otherwise underdetermined numerical problem.
    #[error("underdetermined input: {0}")]
    Underdetermined(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
