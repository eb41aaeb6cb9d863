use thiserror::Error;

/// Which query constraint a rejected query violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `‖x‖₂ ≤ E` on softmax queries.
    Energy,
    /// `c ≤ s_i² ≤ C` on leverage queries.
    Box,
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintKind::Energy => f.write_str("energy constraint ‖x‖₂ ≤ E"),
            ConstraintKind::Box => f.write_str("box constraint c ≤ s_i² ≤ C"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is rank deficient (|R[{col}][{col}]| = {pivot:e})")]
    RankDeficient { col: usize, pivot: f64 },

    #[error("row {row} has zero leverage ({value:e}); w_s is undefined")]
    ZeroLeverage { row: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate model: min eigenvalue of AᵀA is {0:e}")]
    DegenerateModel(f64),

    #[error("sample index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("query violates the {kind}: {detail}")]
    ConstraintViolation { kind: ConstraintKind, detail: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("models are indistinguishable at the chosen query")]
    Indistinguishable,

    #[error("sample budget exceeded: m would exceed {cap}")]
    BudgetExceeded { cap: u64 },

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
