use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty ensemble: the dual cloud has no particles")]
    EmptyCloud,

    #[error("invalid cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid cost model: {0}")]
    InvalidCost(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("negative vertical coordinate {value} in compressible mode")]
    NegativeVertical { value: f64 },

    /// The free-surface construction needs every score to decrease with height.
    #[error("particle {particle} has y3 = {y3} >= 0; free-surface mode needs y3 < 0")]
    NonNegativeVerticalSlope { particle: usize, y3: f64 },

    #[error("weight vector has length {found}, cloud has {expected} particles")]
    LengthMismatch { expected: usize, found: usize },

    #[error("free surface reaches the vertical cap in {columns} column(s); raise the cap")]
    CapTooLow { columns: usize },

    #[error("weight solve did not converge after {iterations} iterations (mass residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("state is not converged (mass residual {residual:e} > tolerance {tolerance:e})")]
    UnconvergedState { residual: f64, tolerance: f64 },

    #[error("surface height cross-check failed in column {column}: residual {residual:e}")]
    SurfaceMismatch { column: usize, residual: f64 },

    #[error("transport problem infeasible: {0}")]
    Infeasible(String),

    #[error("oracle precondition violated: {0}")]
    OracleInput(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
