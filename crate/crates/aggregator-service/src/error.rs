use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    /// The submission is malformed; maps to a 400-class response.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("storage: {0}")]
    Storage(#[from] rusqlite::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl StoreError {
    pub fn rejected(reason: impl Into<String>) -> StoreError {
        StoreError::Rejected(reason.into())
    }

    pub fn is_client_error(&self) -> bool {
        matches!(self, StoreError::Rejected(_))
    }
}

impl From<measurement_core::DomainError> for StoreError {
    fn from(e: measurement_core::DomainError) -> Self {
        StoreError::Rejected(e.to_string())
    }
}
