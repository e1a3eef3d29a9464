//! Suite execution: a plan of probe items run strictly one at a time so
//! probes never interfere with each other, each item's records batched
//! and handed to the aggregator sink.

use measurement_core::{Method, RecordBatch, RecordSink};

use crate::bandwidth::measure_stream_bandwidth;
use crate::capacity::measure_packet_pair_capacity;
use crate::latency::measure_echo_latency;
use crate::session::{ProbeContext, ProbeSession, Transport};
use crate::{BandwidthProbeConfig, CapacityProbeConfig, LatencyProbeConfig};

#[derive(Debug, Clone)]
pub enum ProbeSpec {
    Bandwidth(BandwidthProbeConfig),
    Capacity(CapacityProbeConfig),
    TcpLatency(LatencyProbeConfig),
    UdpLatency(LatencyProbeConfig),
}

impl ProbeSpec {
    pub fn expected_transport(&self) -> Transport {
        match self {
            ProbeSpec::Bandwidth(_) | ProbeSpec::TcpLatency(_) => Transport::Tcp,
            ProbeSpec::Capacity(_) | ProbeSpec::UdpLatency(_) => Transport::Udp,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProbeSpec::Bandwidth(_) => "bandwidth",
            ProbeSpec::Capacity(_) => "capacity",
            ProbeSpec::TcpLatency(_) => "tcp_latency",
            ProbeSpec::UdpLatency(_) => "udp_latency",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanItem {
    pub session: ProbeSession,
    pub spec: ProbeSpec,
    pub context: ProbeContext,
}

#[derive(Debug)]
pub struct SuiteItemError {
    pub index: usize,
    pub probe: &'static str,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct SuiteOutcome {
    pub batches: Vec<RecordBatch>,
    pub errors: Vec<SuiteItemError>,
}

impl SuiteOutcome {
    pub fn record_count(&self) -> usize {
        self.batches.iter().map(|b| b.records.len()).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Executes the plan sequentially. Per-item failures (probe errors or
/// submission failures) are recorded and the suite continues. An empty
/// plan produces an empty outcome and never touches the sink.
pub fn run_active_suite(
    plan: &[PlanItem],
    sink: Option<&dyn RecordSink>,
    submitter: &str,
) -> SuiteOutcome {
    let mut outcome = SuiteOutcome::default();
    for (index, item) in plan.iter().enumerate() {
        let mut session = item.session.clone();
        session.transport = item.spec.expected_transport();
        let records = match &item.spec {
            ProbeSpec::Bandwidth(cfg) => measure_stream_bandwidth(&session, cfg, &item.context),
            ProbeSpec::Capacity(cfg) => measure_packet_pair_capacity(&session, cfg, &item.context)
                .map(|m| vec![m.record]),
            ProbeSpec::TcpLatency(cfg) | ProbeSpec::UdpLatency(cfg) => {
                measure_echo_latency(&session, cfg, &item.context).map(|m| m.records)
            }
        };
        let records = match records {
            Ok(records) => records,
            Err(e) => {
                outcome.errors.push(SuiteItemError {
                    index,
                    probe: item.spec.name(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let batch = RecordBatch {
            source: Method::Active,
            submitter: submitter.to_string(),
            records,
        };
        if let Some(sink) = sink {
            if let Err(e) = sink.submit(&batch) {
                outcome.errors.push(SuiteItemError {
                    index,
                    probe: item.spec.name(),
                    message: format!("submit failed: {e}"),
                });
            }
        }
        outcome.batches.push(batch);
    }
    outcome
}
