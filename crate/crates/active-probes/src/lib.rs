//! Active measurement probes over real sockets.
//!
//! A probe session pairs an initiator with a responder endpoint (the
//! observer on a MEC node or the remote server in the cloud) and runs one
//! of three procedures:
//!
//! - stream bandwidth: a TCP transfer timed at the receiver from the
//!   first payload byte to the last,
//! - bottleneck capacity: UDP packet pairs sent back to back, estimated
//!   from the receiver-side dispersion of each pair,
//! - echo latency: application-layer round-trip times over TCP (one
//!   reused connection) or UDP (independent datagrams).
//!
//! The wire protocol is a fixed 16-byte header followed by an optional
//! JSON payload; see [`protocol`] for the exact layout. The [`shaper`]
//! module provides an in-process token-bucket/delay harness used by the
//! test and validation suites to emulate rate limits and added latency
//! on loopback paths.

pub mod bandwidth;
pub mod capacity;
mod error;
pub mod latency;
pub mod protocol;
pub mod responder;
mod session;
pub mod shaper;
pub mod suite;

pub use bandwidth::measure_stream_bandwidth;
pub use capacity::{
    dispersions_from_arrivals, estimate_from_dispersions, measure_packet_pair_capacity,
    CapacityEstimate, CapacityMeasurement, MIN_DISPERSION_US,
};
pub use error::ProbeError;
pub use latency::{measure_echo_latency, LatencyMeasurement};
pub use responder::{Responder, ResponderHandle};
pub use session::{ProbeContext, ProbeRole, ProbeSession, Transport};
pub use suite::{run_active_suite, PlanItem, ProbeSpec, SuiteItemError, SuiteOutcome};

use measurement_core::DomainError;

/// Stream bandwidth probe: `num_packets` writes of `packet_size` bytes
/// per repetition, one measurement per repetition.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BandwidthProbeConfig {
    pub num_packets: u32,
    pub packet_size: u32,
    pub repetitions: u32,
}

impl Default for BandwidthProbeConfig {
    fn default() -> Self {
        BandwidthProbeConfig {
            num_packets: 1024,
            packet_size: 1420,
            repetitions: 10,
        }
    }
}

impl BandwidthProbeConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.num_packets < 2 {
            return Err(DomainError::invalid("num_packets", "must be at least 2"));
        }
        if self.packet_size < 1 {
            return Err(DomainError::invalid("packet_size", "must be at least 1"));
        }
        if self.repetitions < 1 {
            return Err(DomainError::invalid("repetitions", "must be at least 1"));
        }
        Ok(())
    }
}

/// Packet-pair capacity probe: `num_pairs` back-to-back UDP pairs of
/// `packet_size` bytes (header included).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CapacityProbeConfig {
    pub num_pairs: u32,
    pub packet_size: u32,
}

impl Default for CapacityProbeConfig {
    fn default() -> Self {
        CapacityProbeConfig {
            num_pairs: 25,
            packet_size: 1420,
        }
    }
}

impl CapacityProbeConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.num_pairs < 1 {
            return Err(DomainError::invalid("num_pairs", "must be at least 1"));
        }
        if self.packet_size <= protocol::HEADER_LEN as u32 {
            return Err(DomainError::invalid(
                "packet_size",
                format!("must exceed the {}-byte header", protocol::HEADER_LEN),
            ));
        }
        Ok(())
    }
}

/// Echo latency probe: `num_probes` round trips of `payload_size` bytes.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LatencyProbeConfig {
    pub num_probes: u32,
    pub payload_size: u32,
}

impl Default for LatencyProbeConfig {
    fn default() -> Self {
        LatencyProbeConfig {
            num_probes: 25,
            payload_size: 1,
        }
    }
}

impl LatencyProbeConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.num_probes < 1 {
            return Err(DomainError::invalid("num_probes", "must be at least 1"));
        }
        if self.payload_size < 1 {
            return Err(DomainError::invalid("payload_size", "must be at least 1"));
        }
        Ok(())
    }
}
