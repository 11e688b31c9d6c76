use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A stage subproblem had no feasible point at the incoming state.
    #[error(
        "recourse violation at stage {stage} (scenario {scenario}) for incoming state {state:?}"
    )]
    RecourseViolation {
        stage: usize,
        scenario: usize,
        state: Vec<f64>,
    },

    #[error("stage {stage} subproblem is unbounded: {reason}")]
    Unbounded { stage: usize, reason: String },

    #[error("linear program hit the pivot limit at stage {stage}")]
    PivotLimit { stage: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
