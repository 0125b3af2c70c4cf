use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid trial: {0}")]
    InvalidTrial(String),

    #[error("degenerate study: {0}")]
    DegenerateStudy(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("tokenization error: {0}")]
    Tokenization(String),

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged: {0}")]
    TrainingFailed(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
