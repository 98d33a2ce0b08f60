use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration diverged at step {step} (|state| = {magnitude:e})")]
    IntegrationDiverged { step: usize, magnitude: f64 },

    #[error("NARMA sequence diverged in all {attempts} attempts")]
    NarmaDiverged { attempts: usize },

    #[error("signal has zero variance")]
    DegenerateSignal,

    #[error("sparsity {eta_f} cannot cover every row and column of a {m}x{m} matrix")]
    InvalidSparsity { m: usize, eta_f: f64 },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear reservoir diverged at step {step}")]
    LinearDiverged { step: usize },

    #[error("least-squares system is singular (rank {rank} < {cols})")]
    SingularSystem { rank: usize, cols: usize },

    #[error("target has zero variance")]
    DegenerateTarget,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reservoir states are degenerate (all zero)")]
    DegenerateState,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: need {needed} samples, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("zero fundamental response at node {node} for probe period {period}")]
    DegenerateResponse { node: usize, period: f64 },

    #[error("nodes {i} and {j} are not adjacent")]
    NotAdjacent { i: usize, j: usize },

    #[error("graph has no finite off-diagonal distance")]
    EmptyGraph,

    #[error("spectral-radius calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
