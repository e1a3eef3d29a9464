//! Shared domain model for network KPI measurements.
//!
//! Everything that moves between the probes, the passive analyzer, the
//! aggregator and the trace replay library is defined here: the metric
//! taxonomy, the descriptor that tags every sample with its experiment
//! setup, the measurement record itself, and the wildcard matching used
//! to select records and traces.
//!
//! Canonical units are fixed at this layer: bandwidth, capacity and
//! throughput values are stored in Mbps, latency values in milliseconds.
//! Self-reported metrics carry an application-defined unit verbatim.

mod error;
mod ndjson;
mod query;
mod record;
mod sink;

pub use error::DomainError;
pub use ndjson::{decode_record, encode_record, read_records, read_records_from, write_records};
pub use query::{descriptor_matches, DescriptorQuery, RecordQuery};
pub use record::{
    now_timestamp_us, AccessTechnology, Direction, MeasurementRecord, Method, MetricKind,
    RecordBatch, SegmentId, TraceDescriptor, UNIT_MBPS, UNIT_MS,
};
pub use sink::{RecordSink, SinkError};
