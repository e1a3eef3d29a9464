//! Trace selection and replay for simulators.
//!
//! A trace repository is a directory of newline-delimited-JSON record
//! files plus a `manifest.json` mapping each file to the full descriptor
//! it was collected under. Opening a trace selects one matching file with
//! a seeded, platform-independent PRNG, loads it into aligned time series,
//! and serves values with sample-and-hold semantics, optionally wrapping
//! timestamps modulo the trace duration (circular replay).

mod error;
pub mod prng;
mod repository;
mod series;
mod trace;

pub use error::TraceError;
pub use repository::{Manifest, ManifestEntry, TraceRepository, MANIFEST_FILE};
pub use series::Series;
pub use trace::{NetworkTrace, ReplayQuery};
