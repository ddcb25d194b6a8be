use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ring size n_c = {0} unsupported (need 3 <= n_c <= 32)")]
    InvalidRingSize(usize),

    #[error("n_up = {n_up} out of range for a ring of {n_sites} sites")]
    InvalidFilling { n_sites: usize, n_up: usize },

    #[error("state vector does not belong to the expected basis ({0})")]
    BasisMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain-wall image sum did not converge (w = {w}, n_c = {n_sites}, last change {last_change:e})")]
    AlphaNotConverged {
        w: f64,
        n_sites: usize,
        last_change: f64,
    },

    #[error("non-positive coupling on bond {bond}: J = {value}")]
    NonPositiveCoupling { bond: usize, value: f64 },

    #[error("disorder fraction {0} must lie in [0, 1)")]
    InvalidDisorder(f64),

    #[error("sector dimension {dim} exceeds the dense limit of {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("lanczos did not converge after {iterations} iterations (best residuals {residuals:?})")]
    NotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("propagation did not converge: {steps} steps per period, eigenphase change {phase_change:e}")]
    PropagationNotConverged { steps: usize, phase_change: f64 },

    #[error("ambiguous floquet pairing: overlaps {first} and {second} differ by less than 1e-3")]
    AmbiguousPairing { first: f64, second: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dense eigendecomposition failed to converge")]
    DenseSolverFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
