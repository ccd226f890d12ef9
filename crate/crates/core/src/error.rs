use thiserror::Error;

use crate::linalg::SolveError;
use crate::mesh::MeshError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("coefficient error: {0}")]
    CoefficientError(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("field is not a solved state: free-node residual {residual:e} exceeds {limit:e}")]
    StaleField { residual: f64, limit: f64 },
    #[error("flux compatibility violated on component {component}: total {total:e} vs scale {scale:e}")]
    CompatibilityViolated {
        component: usize,
        total: f64,
        scale: f64,
    },
    #[error("Picard window shrank below the time step at t = {t_start}")]
    ContractionFailure { t_start: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
