use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is singular to working precision at pivot {pivot} (estimated condition number {condition_estimate:.3e})")]
    Singular {
        pivot: usize,
        condition_estimate: f64,
    },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("quadrature did not converge: estimated error {estimated_error:.3e} exceeds tolerance {tolerance:.3e}")]
    NonConvergence {
        estimated_error: f64,
        tolerance: f64,
    },
    #[error("decay fit needs at least 3 usable samples, got {usable}")]
    InsufficientData { usable: usize },
    #[error("evaluation points coincide (separation {separation:.3e})")]
    CoincidentPoints { separation: f64 },
    #[error("evaluation point is within {distance:.3e} of the lattice")]
    NearLattice { distance: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("boundary-condition fit failed: {0}")]
    FitFailure(String),
    #[error("profile carries mass at s = 0, so the x3-slice norm of the mode diverges")]
    DivergentSliceNorm,
    #[error("quadrature budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
