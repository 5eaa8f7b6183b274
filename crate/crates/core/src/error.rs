use thiserror::Error;

use crate::tower::{DomainError, TowerError};

/// Errors raised by the geometry, geodesic and field computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point outside the smoothness domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Eval(#[from] DomainError),
    #[error("degenerate metric: |det g| = {det:e} below threshold {threshold:e}")]
    Degenerate { det: f64, threshold: f64 },
    #[error("ill-conditioned metric: condition estimate {condition:e}")]
    IllConditioned { condition: f64 },
    #[error("operation not supported for {0} structures")]
    UnsupportedKind(&'static str),
    #[error("tensor rank {0} not supported (at most 2)")]
    UnsupportedRank(usize),
    #[error("wrong operation: {0}")]
    WrongOperation(String),
    #[error("chart map is not invertible: |det J| = {0:e}")]
    SingularChart(f64),
    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<GeometryError> },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl GeometryError {
    /// True for errors that mean "outside where the structure is smooth".
    pub fn is_domain(&self) -> bool {
        matches!(self, GeometryError::Domain(_) | GeometryError::Eval(_))
    }
}

impl From<TowerError> for GeometryError {
    fn from(e: TowerError) -> Self {
        match e {
            TowerError::Domain(d) => GeometryError::Eval(d),
            other => GeometryError::Invalid(other.to_string()),
        }
    }
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
