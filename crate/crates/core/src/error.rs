use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot parse number {0:?}")]
    Parse(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("size_limit exceeded: n = {n}, limit = {limit}")]
    SizeLimit { n: usize, limit: usize },

    #[error("empty block")]
    EmptyBlock,

    #[error("negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },

    #[error("row {row} does not sum to its weight")]
    RowMarginal { row: usize },

    /// Column marginal broken: the array does not preserve the measure.
    #[error("column {col} does not sum to its weight (measure not invariant)")]
    ColumnMarginal { col: usize },

    #[error("coefficients do not sum to 1")]
    CoefficientSum,

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("infeasible coupling: weight at index {index} exceeds half the total mass")]
    Infeasible { index: usize },

    #[error("kernel is not invertible (not a permutation)")]
    NotInvertible,

    #[error("Markov axiom violated: {0}")]
    Axiom(String),

    #[error("guard violation: {0}")]
    Guard(String),

    #[error("perturbation layout is not associated with its window: {0}")]
    NotAssociated(String),

    #[error("residual mass {residual} exceeds cap {cap}")]
    ResidualCap { residual: String, cap: String },

    #[error("malformed input: {0}")]
    Format(String),
}
