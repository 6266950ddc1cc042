//! Error taxonomy shared across the crate.
//!
//! Every failure is classified so the CLI can map it to a stable exit code:
//! assumption violations (A1/A2) are code 2, numerical non-convergence is
//! code 3, schema/input problems are code 4.

use thiserror::Error;

/// Which structural assumption on a Hamiltonian family was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// A1: the asymptotic matrices J·S(λ, ±∞) must be hyperbolic.
    A1,
    /// A2: the systems at λ = 0 and λ = 1 admit only the trivial solution.
    A2,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Assumption::A1 => write!(f, "A1 (hyperbolic limits)"),
            Assumption::A2 => write!(f, "A2 (invertible endpoints)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a precondition or an invariant of the operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A structural assumption failed, with the parameter value where it did.
    #[error("assumption {assumption} violated at lambda = {lambda}: {detail}")]
    AssumptionViolation {
        assumption: Assumption,
        lambda: f64,
        detail: String,
    },

    /// An iteration or refinement did not reach its tolerance.
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    /// A finite-difference step was too large for the local chart.
    #[error("step too large: {0}; retry with a smaller step")]
    StepTooLarge(String),

    /// A crossing form is degenerate; the path must be regularized first.
    #[error("non-regular crossing at lambda = {lambda}: {detail}; apply regularization")]
    NonRegularCrossing { lambda: f64, detail: String },

    /// Problem file or catalog reference could not be interpreted.
    #[error("schema error: {0}")]
    Schema(String),
}

impl Error {
    /// Process exit code for the CLI: 2 assumption, 3 numerical, 4 schema.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AssumptionViolation { .. } => 2,
            Error::NonConvergence(_) | Error::StepTooLarge(_) | Error::NonRegularCrossing { .. } => 3,
            Error::Schema(_) => 4,
            Error::InvalidInput(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
