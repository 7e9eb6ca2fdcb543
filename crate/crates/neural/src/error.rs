use thiserror::Error;

pub type Result<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch in {layer}: expected {expected}, got {got}")]
    Dimension {
        layer: String,
        expected: String,
        got: String,
    },

    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),

    #[error("backward called on {0} without a cached forward pass")]
    MissingCache(String),

    #[error("non-finite gradient in tensor `{0}`")]
    Divergence(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn dim_err(layer: &str, expected: impl ToString, got: impl ToString) -> NeuralError {
    NeuralError::Dimension {
        layer: layer.to_string(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
