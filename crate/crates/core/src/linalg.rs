//! Sparse symmetric storage, Jacobi-preconditioned conjugate gradients and a
//! small dense LU solver.

mod cg;
mod dense;
mod sparse;

pub use cg::{cg_solve, cg_solve_zero_mean, SolveReport, SolverOptions};
pub use dense::{dense_solve, DenseMatrix, LuFactors};
pub use sparse::{SparseSym, TripletBuilder};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients did not converge: {0:?}")]
    SolverDiverged(SolveReport),
    #[error("diagonal entry {index} is {value}, Jacobi preconditioner needs positive diagonal")]
    PreconditionerError { index: usize, value: f64 },
    #[error("source is incompatible with the operator kernel: |sum| / norm = {ratio:e}")]
    IncompatibleSource { ratio: f64 },
    #[error("constants matrix is singular (pivot {pivot:e} in column {column})")]
    SingularConstantsMatrix { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
