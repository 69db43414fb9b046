use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoevoError>;

#[derive(Debug, Error)]
pub enum CoevoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(
        "structure targets not reached after {iterations} iterations \
         (best reciprocity {best_reciprocity:.4}, best clustering {best_clustering:.4})"
    )]
    StructureUnreachable {
        iterations: u64,
        best_reciprocity: f64,
        best_clustering: f64,
    },

    #[error(
        "simulation stalled: no message transmitted for {idle_ticks} consecutive ticks \
         after {emitted} records; try a lower send threshold"
    )]
    Deadlock { idle_ticks: u64, emitted: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoevoError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoevoError::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CoevoError::InvalidArgument(msg.into())
    }
}
