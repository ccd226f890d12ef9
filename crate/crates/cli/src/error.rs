use thiserror::Error;

use capsim::linalg::SolveError;
use capsim::mesh::MeshError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical invariant failed ({invariant}): {source}")]
    Numerical {
        invariant: &'static str,
        source: capsim::Error,
    },
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } | CliError::Verify(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

/// Short name of the invariant a solver error reports on.
fn invariant_name(e: &capsim::Error) -> &'static str {
    use capsim::Error as E;
    match e {
        E::Mesh(_) => "mesh geometry",
        E::Solve(SolveError::SolverDiverged(_)) => "linear solver convergence",
        E::Solve(SolveError::PreconditionerError { .. }) => "positive stiffness diagonal",
        E::Solve(SolveError::IncompatibleSource { .. }) => "surface source compatibility",
        E::Solve(SolveError::SingularConstantsMatrix { .. }) => "constants matrix invertibility",
        E::Solve(SolveError::DimensionMismatch { .. }) => "operator dimensions",
        E::CoefficientError(_) => "coefficient coverage",
        E::InvalidField(_) => "finite field values",
        E::StaleField { .. } => "solved-state residual",
        E::CompatibilityViolated { .. } => "flux compatibility",
        E::ContractionFailure { .. } => "Picard contraction",
        E::InvalidConfig(_) => "configuration",
    }
}

impl From<capsim::Error> for CliError {
    fn from(e: capsim::Error) -> Self {
        match e {
            capsim::Error::InvalidConfig(m) => CliError::Config(m),
            capsim::Error::Mesh(MeshError::Io(m)) => CliError::Io(m),
            capsim::Error::Mesh(
                ref m @ (MeshError::InvalidMeshSpec(_) | MeshError::SnapError { .. } | MeshError::GeometryError(_)),
            ) => CliError::Config(format!("mesh: {m}")),
            source => CliError::Numerical {
                invariant: invariant_name(&source),
                source,
            },
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        capsim::Error::Mesh(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
