use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Exact support enumeration was requested but the number of supports
    /// exceeds the configured budget. Callers should fall back to the
    /// coherence-bound mode.
    #[error("enumeration budget exceeded: {supports} supports > budget {budget}; use the coherence-bound mode")]
    BudgetExceeded { supports: u128, budget: u128 },

    #[error("rank-deficient Gram matrix on support {support:?}: smallest eigenvalue {smallest_eig:.3e}")]
    RankDeficientGram {
        support: Vec<usize>,
        smallest_eig: f64,
    },

    #[error("coordinate descent did not converge after {sweeps} sweeps: duality gap {gap:.3e}")]
    NonConvergence { sweeps: usize, gap: f64 },

    #[error("infeasible radius {radius}: {reason}")]
    InfeasibleRadius { radius: f64, reason: String },

    #[error("radius {radius} outside the admissible interval ({lo}, {hi})")]
    RadiusOutsideInterval { radius: f64, lo: f64, hi: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
