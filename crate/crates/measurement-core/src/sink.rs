use thiserror::Error;

use crate::record::{MeasurementRecord, RecordBatch};

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("batch rejected: {0}")]
    Rejected(String),
    #[error("transport: {0}")]
    Transport(String),
}

/// Anything that accepts measurement batches. Implemented by the
/// aggregator HTTP client and by in-memory sinks in tests.
pub trait RecordSink {
    /// Submits a batch and returns the assigned batch id.
    fn submit(&self, batch: &RecordBatch) -> Result<String, SinkError>;

    /// Submits a single self-reported record and returns its id.
    fn submit_self(&self, record: &MeasurementRecord) -> Result<String, SinkError> {
        let batch = RecordBatch {
            source: crate::record::Method::SelfReported,
            submitter: String::new(),
            records: vec![record.clone()],
        };
        self.submit(&batch)?;
        Ok(record.id.clone())
    }
}
