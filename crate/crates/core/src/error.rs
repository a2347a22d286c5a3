use thiserror::Error;

/// Errors produced by chain validation, model construction and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, outside 1 ± {tol}")]
    RowSumViolation { row: usize, sum: f64, tol: f64 },
    #[error("chain is not irreducible; stationary distribution not unique")]
    NotIrreducible,
    #[error("stationary mass m_{index} = 0; time reversal undefined")]
    ZeroMass { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mode index {index} out of range for {n_modes} modes")]
    IndexOutOfRange { index: usize, n_modes: usize },
    #[error("learning rate out of [0, 1]: alpha_{index} = {value}")]
    AlphaOutOfRange { index: usize, value: f64 },
    #[error("event probabilities sum to {sum}, expected 1")]
    ProbabilitySumViolation { sum: f64 },
    #[error("distribution invalid: {reason}")]
    InvalidDistribution { reason: String },
    #[error("enumeration over {count} mode sequences exceeds cap {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },
    #[error("first-moment system is singular; stationary mean not determined")]
    SingularMomentSystem,
    #[error("matrix product underflowed to zero within a renormalization stride")]
    ProductUnderflowUnrecoverable,
    #[error("empty sample set")]
    EmptySample,
    #[error("path index {index} invalid for chain with {n_states} states")]
    InvalidPathIndex { index: usize, n_states: usize },
    #[error("empty mode path")]
    EmptyPath,
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
