use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate interval [{lo}, {hi}]")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("1/h0 = {0} is not an integer")]
    NonIntegerMeshRatio(f64),

    #[error("mode {n} is not in the mode table (table has {table} rows)")]
    ModeOutOfTable { n: usize, table: usize },

    #[error("unsupported spatial dimension {0} (expected 1 or 3)")]
    UnsupportedDimension(usize),

    #[error("system with {dof} unknowns exceeds the dof cap of {cap}; use a smaller problem or threshold")]
    DofCapExceeded { dof: usize, cap: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("index set is not downward closed: {index} is missing backward neighbor {missing}")]
    NotDownwardClosed { index: String, missing: String },

    #[error("threshold {threshold} excludes the root index (root needs {root})")]
    EmptySet { threshold: f64, root: f64 },

    #[error("evaluation failed at alpha={alpha:?}, y={y:?}: {reason}")]
    Evaluation {
        alpha: Vec<u32>,
        y: Vec<f64>,
        reason: String,
    },

    #[error("need at least {needed} usable samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("sample {index} is not positive ({value})")]
    NonPositiveSample { index: usize, value: f64 },

    #[error("budget {budget} is below the asymptotic bound {bound}")]
    BudgetTooSmall { budget: f64, bound: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
