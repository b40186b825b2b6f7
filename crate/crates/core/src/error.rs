use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A function was probed outside the set where it is finite or defined.
    #[error("evaluation left the domain at {probe:?}: {what}")]
    Domain { what: String, probe: Vec<f64> },

    /// Adaptive quadrature ran out of subdivision budget.
    #[error("quadrature on [{a}, {b}] did not reach tolerance (best estimate {estimate})")]
    QuadratureAccuracy { a: f64, b: f64, estimate: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// The link Jacobian could not be inverted.
    #[error("link Jacobian is singular at {point:?} (|det| = {det:e})")]
    CurvatureSingularity { point: Vec<f64>, det: f64 },

    #[error("misuse: {0}")]
    Misuse(String),

    /// A requested certification failed; carries the worst sample.
    #[error("certification failed: {message} (worst value {value:e} at {point:?})")]
    Certification {
        message: String,
        point: Vec<f64>,
        value: f64,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: impl Into<String>, probe: &[f64]) -> Self {
        Error::Domain {
            what: what.into(),
            probe: probe.to_vec(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
