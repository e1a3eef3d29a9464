//! Passive KPI extraction from packet captures.
//!
//! Input is a classic pcap file (Ethernet, IPv4, TCP/UDP) produced at a
//! traffic redirection point. The analyzer reconstructs bidirectional
//! flows, computes per-bin throughput from transport payload bytes, and
//! recovers round-trip latency for TCP flows by matching data segments
//! with the first later cumulative ACK that covers them. Retransmitted
//! segments are excluded from latency samples.
//!
//! Producing captures is out of process: any standard sniffer works. A
//! synthetic capture writer is included for tests and fixtures.

mod analyze;
mod error;
mod flow;
mod latency;
mod pcap;
mod pcap_write;
mod throughput;

pub use analyze::{analyze_and_submit, analyze_capture, AnalysisReport, AnalyzerConfig};
pub use error::AnalyzerError;
pub use flow::{extract_flows, FlowDirection, FlowFilter, FlowKey, FlowRecords};
pub use latency::{ack_latency, LatencySample};
pub use pcap::{parse_capture, CaptureData, PacketRecord, TcpInfo, Transport, TCP_ACK, TCP_SYN};
pub use pcap_write::CaptureWriter;
pub use throughput::{binned_throughput, ThroughputBin};
