use thiserror::Error;

/// Errors raised by model construction and the numerical kernels.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid points per axis must be an even power of two, got {0}")]
    InvalidGridSize(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cutoff profile takes negative value {value} at |k| = {k_abs}")]
    NegativeProfile { value: f64, k_abs: f64 },

    #[error("infrared violation: {0}")]
    InfraredViolation(String),

    #[error("empty particle cluster")]
    EmptyCluster,

    #[error("eigensolver did not converge after {iterations} matvecs (best eigenvalue {best_eigenvalue}, residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        best_eigenvalue: f64,
        residual: f64,
    },

    #[error("cluster {subset:?}: {source}")]
    Subset {
        subset: Vec<usize>,
        #[source]
        source: Box<LabError>,
    },

    #[error("size guard: {what} = {size} exceeds limit {limit}")]
    Budget {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("imaginary residue {0:e} after inverse transform of an even integrand")]
    ImaginaryResidue(f64),

    #[error("Levy density is not integrable at the origin (|x| = {0:e})")]
    OriginSingularity(f64),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl LabError {
    /// Errors caused by the inputs (parameters, grids, size guards) rather than
    /// by a numerical kernel.
    pub fn is_validation(&self) -> bool {
        match self {
            LabError::InvalidParameter { .. }
            | LabError::InvalidGridSize(_)
            | LabError::DimensionMismatch { .. }
            | LabError::NegativeProfile { .. }
            | LabError::InfraredViolation(_)
            | LabError::EmptyCluster
            | LabError::Budget { .. } => true,
            LabError::Subset { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
