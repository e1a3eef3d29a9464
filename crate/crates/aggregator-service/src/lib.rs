//! The measurement aggregator: accepts batches from probes, analyzers
//! and self-instrumented applications over a small REST surface, persists
//! them in an embedded SQLite store, and serves filtered queries and
//! newline-delimited-JSON trace exports compatible with the trace replay
//! library.
//!
//! REST surface (JSON bodies):
//!
//! - `POST /v1/measurements` — submit a batch; optional `Idempotency-Key`
//!   header makes retries safe
//! - `POST /v1/self`         — submit one self-reported record
//! - `GET  /v1/measurements` — query records by descriptor fields, time
//!   range and run id
//! - `GET  /v1/export`       — export matching runs as trace files into a
//!   server-side directory, returning the manifest
//! - `GET  /v1/health`       — liveness
//!
//! When a shared token is configured, every `/v1` route requires
//! `Authorization: Bearer <token>`.

pub mod client;
mod error;
pub mod http;
mod store;

pub use client::AggregatorClient;
pub use error::StoreError;
pub use http::{serve, AppState};
pub use store::{ExportOutcome, Store, StoredBatch};
