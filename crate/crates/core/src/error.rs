use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model parameter violates its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The n-player aggregate `psi_sigma_n` equals one.
    #[error("no constant forward Nash equilibrium (psi_sigma_n = {psi_sigma})")]
    DegenerateEquilibrium { psi_sigma: f64 },

    /// The mean-field aggregate `psi_sigma` equals one.
    #[error("no constant MF-equilibrium (psi_sigma = {psi_sigma})")]
    NoConstantEquilibrium { psi_sigma: f64 },

    #[error("best-response iteration did not converge after {iterations} sweeps (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("horizon segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for the two "psi = 1" failures, which callers usually report
    /// differently from input errors.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::DegenerateEquilibrium { .. } | Error::NoConstantEquilibrium { .. } => true,
            Error::Segment { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}
