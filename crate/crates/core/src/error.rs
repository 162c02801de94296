use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not unitary (||V^dag V - I||_F = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (||H||_F = {norm:.3e})")]
    Convergence { iterations: usize, norm: f64 },

    #[error("eigenphase {phase:.9} lies within {tolerance:e} of the principal-branch boundary")]
    BranchBoundary { phase: f64, tolerance: f64 },

    #[error("singular matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("imaginary residue {residue:.3e} in {context} exceeds tolerance")]
    ImaginaryResidue { context: &'static str, residue: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tracking Gramian condition {condition:.3e} exceeds hard cap {cap:.1e}")]
    SingularTrack { condition: f64, cap: f64 },

    #[error("integration stalled at s = {s:.6e} (step {step:.3e}, scaled error {error:.3e})")]
    Stall { s: f64, step: f64, error: f64 },

    #[error("no bracketing interval found after {evaluations} evaluations")]
    NoBracket { evaluations: usize },

    #[error("at s = {s:.6e}: {source}")]
    Step {
        s: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn at_step(self, s: f64) -> Self {
        Error::Step {
            s,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through step context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::InvalidInput(_) | Error::Dimension(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
