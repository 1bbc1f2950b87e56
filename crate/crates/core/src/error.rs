use thiserror::Error;

pub type Result<T> = std::result::Result<T, EivError>;

#[derive(Debug, Error)]
pub enum EivError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eig:.3e} (largest {max_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64, max_eig: f64 },

    #[error("lower-RE condition is vacuous: lambda_min(A) = {0:.3e}")]
    DegenerateCurvature(f64),

    #[error("contraction infeasible: {0}")]
    InfeasibleContraction(String),

    #[error("composite gradient descent diverged at iteration {iteration}: objective {objective:.3e} (initial {initial:.3e})")]
    Diverged {
        iteration: usize,
        objective: f64,
        initial: f64,
    },

    #[error("conic program is infeasible: {0}")]
    InfeasibleProblem(String),

    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EivError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EivError::InvalidInput(msg.into())
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(EivError::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
