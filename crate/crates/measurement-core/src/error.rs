use thiserror::Error;

/// Validation failures for domain values.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error("field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("empty batch: a batch must contain at least one record")]
    EmptyBatch,
    #[error("mixed descriptors in batch: record {index} differs from the first record")]
    MixedDescriptors { index: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl DomainError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        DomainError::InvalidField {
            field,
            reason: reason.into(),
        }
    }
}
