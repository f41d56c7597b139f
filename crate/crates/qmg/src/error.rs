use thiserror::Error;

/// Errors produced by construction, validation, and solver routines.
#[derive(Error, Debug)]
pub enum Error {
    /// Two objects that must live on the same algebra have different shapes.
    #[error("shape mismatch: expected blocks {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// A matrix-valued input fails a structural requirement
    /// (hermiticity, positivity, trace normalization, unitarity, ...).
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// A seminorm intended as a Lip-norm has the wrong kernel:
    /// it must vanish exactly on the scalar multiples of the unit.
    #[error("not a Lipschitz pair: seminorm kernel has dimension {kernel_dim}, expected 1")]
    NotLipschitz { kernel_dim: usize },

    /// A linear map fails to be the claimed kind of morphism.
    #[error("not a *-morphism: {reason}")]
    NotMorphism { reason: String },

    /// The iterative solver exhausted its iteration budget before closing
    /// the requested gap.
    #[error("solver did not converge: gap {gap:.3e} after {iterations} iterations (tolerance {tol:.3e})")]
    NoConvergence {
        gap: f64,
        iterations: usize,
        tol: f64,
    },

    /// A linear program turned out infeasible or unbounded.
    #[error("linear program {status}: {context}")]
    BadProgram {
        status: &'static str,
        context: String,
    },

    /// A requested certified quantity cannot be certified from the
    /// available data.
    #[error("no certified bound available: {reason}")]
    NotCertified { reason: String },

    /// Input/output or descriptor-parsing failure.
    #[error("descriptor error: {0}")]
    Descriptor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
