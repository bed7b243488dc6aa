//! Error types shared by all modules, with process exit codes for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MvError {
    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failure in {stage} at step {step}: residual {residual:e} after {iterations} iterations")]
    Solver {
        stage: String,
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl MvError {
    /// Process exit code: 0 success, 2 config, 3 solver, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            MvError::Config(_) | MvError::Shape { .. } | MvError::Precondition(_) => 2,
            MvError::Solver { .. } | MvError::Io(_) => 3,
            MvError::Verification(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, MvError>;
