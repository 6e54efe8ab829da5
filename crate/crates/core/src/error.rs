use thiserror::Error;

use crate::predict::PredictionErrorSeries;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid construction: {0}")]
    InvalidConstruction(String),

    #[error("non-integrable density: {0}")]
    Integrability(String),

    /// The requested accuracy was not reached within the subdivision budget.
    #[error("precision {requested:.3e} unreachable, best-effort bound {best_bound:.3e}")]
    Precision { requested: f64, best_bound: f64 },

    #[error(
        "covariance r({lag}) mismatch: grid {grid:.6e} vs direct {direct:.6e} (bound {bound:.3e})"
    )]
    Consistency {
        lag: usize,
        grid: f64,
        direct: f64,
        bound: f64,
    },

    #[error("undecidable divergence: unannotated near-zero of the density at λ = {at:.6}")]
    UndecidableDivergence { at: f64 },

    /// Levinson breakdown persisted at the maximum precision. `partial` holds the
    /// series up to `last_valid_n`.
    #[error("ill-conditioned recursion at {precision_bits} bits, last valid n = {last_valid_n}")]
    IllConditioned {
        last_valid_n: usize,
        precision_bits: u32,
        partial: Option<Box<PredictionErrorSeries>>,
    },

    #[error("Toeplitz matrix is not positive definite: leading minor {minor} fails")]
    PsdViolation { minor: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}
