use thiserror::Error;

/// Errors produced by the estimators, the oracle and the data plumbing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} out of range (expected 1..={max})", max = crate::subset::MAX_DIM)]
    DimensionOutOfRange(usize),

    #[error("subset cardinality {k} out of range for d = {d}")]
    CardinalityOutOfRange { d: usize, k: usize },

    #[error("cost table is incomplete: {missing} of {total} subsets have no value")]
    IncompleteCostTable { missing: usize, total: usize },

    #[error("exact aggregation over 2^{d} subsets exceeds the limit d <= {limit}; use permutation sampling")]
    ExactAggregationTooLarge { d: usize, limit: usize },

    #[error("invalid permutation plan: {0}")]
    InvalidPlan(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "degenerate failure probability p = {probability} at threshold t = {threshold}; \
         the threshold is outside the output range or the sample is too small"
    )]
    DegenerateProbability { probability: f64, threshold: f64 },

    #[error("output column is not binary at row {row} (value {value})")]
    NonBinaryOutput { row: usize, value: f64 },

    #[error("non-finite model output at row {row}")]
    NonFiniteOutput { row: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("collinear regressors: {0}")]
    Collinear(String),

    #[error("zero output variance")]
    ZeroVariance,

    #[error("quadrature did not converge (achieved error estimate {achieved:e})")]
    QuadratureNonConvergence { achieved: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
