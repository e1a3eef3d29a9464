use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("no trace matches the query; nearest descriptors: {nearest}")]
    NoMatch { nearest: String },
    #[error("trace file `{file}`: {reason}")]
    BadTraceFile { file: String, reason: String },
    #[error("manifest: {0}")]
    BadManifest(String),
    #[error("series `{0}` is empty")]
    EmptySeries(&'static str),
    #[error("series have no overlap after alignment")]
    NoOverlap,
    #[error("series offsets must be non-negative and strictly increasing")]
    UnsortedSeries,
    #[error("replay timestamp must be non-negative")]
    NegativeTimestamp,
    #[error("record `{id}`: cannot route metric `{metric}` to a bandwidth or rtt series")]
    UnroutableMetric { id: String, metric: String },
    #[error("domain: {0}")]
    Domain(#[from] measurement_core::DomainError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
