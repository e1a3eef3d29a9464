use measurement_core::{
    MeasurementRecord, Method, MetricKind, RecordBatch, RecordSink, TraceDescriptor, UNIT_MBPS,
    UNIT_MS,
};

use crate::error::AnalyzerError;
use crate::flow::{extract_flows, FlowDirection, FlowFilter, FlowRecords};
use crate::latency::ack_latency;
use crate::pcap::{parse_capture, Transport};
use crate::throughput::binned_throughput;

/// Knobs for a capture analysis.
#[derive(Debug, Clone)]
pub struct AnalyzerConfig {
    pub bin_width_s: f64,
    pub filter: Option<FlowFilter>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            bin_width_s: 0.5,
            filter: None,
        }
    }
}

/// Everything one analysis produced. Records are grouped into batches by
/// run id (one run per flow half and metric kind) for submission.
#[derive(Debug, Default)]
pub struct AnalysisReport {
    pub batches: Vec<RecordBatch>,
    pub flows: usize,
    pub skipped_packets: u32,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn records(&self) -> impl Iterator<Item = &MeasurementRecord> {
        self.batches.iter().flat_map(|b| b.records.iter())
    }

    pub fn record_count(&self) -> usize {
        self.batches.iter().map(|b| b.records.len()).sum()
    }
}

/// Decodes a capture, reconstructs flows, and derives throughput bins for
/// every payload-carrying flow direction plus ACK latency samples for TCP
/// flows. `context` supplies the experiment metadata; its method must be
/// passive and its direction is assigned to the earliest-payload half of
/// each flow (the opposite half gets the flipped direction). `analysis_id`
/// prefixes all generated run ids, keeping the output deterministic.
pub fn analyze_capture(
    input: &[u8],
    config: &AnalyzerConfig,
    context: &TraceDescriptor,
    analysis_id: &str,
) -> Result<AnalysisReport, AnalyzerError> {
    if context.method != Method::Passive {
        return Err(AnalyzerError::Descriptor(format!(
            "analysis context must have method `passive`, got `{}`",
            context.method
        )));
    }
    let capture = parse_capture(input)?;
    let flows = extract_flows(&capture.packets, config.filter.as_ref());

    let mut report = AnalysisReport {
        skipped_packets: capture.skipped,
        flows: flows.len(),
        ..Default::default()
    };
    if flows.is_empty() {
        report.warnings.push("no flows matched the filter".into());
        return Ok(report);
    }

    for (flow_idx, (key, flow)) in flows.iter().enumerate() {
        let primary = primary_half(flow);
        for (half, label) in [(FlowDirection::AToB, "ab"), (FlowDirection::BToA, "ba")] {
            let packets = flow.direction(half);
            if packets.iter().all(|p| p.payload_len == 0) {
                continue;
            }
            let direction = if half == primary {
                context.direction
            } else {
                context.direction.flipped()
            };
            let descriptor = TraceDescriptor {
                metric: MetricKind::PassiveThroughput,
                direction,
                ..context.clone()
            };
            let run_id = format!("{analysis_id}-f{flow_idx}-{label}-tput");
            let bins = binned_throughput(packets, config.bin_width_s)?;
            let records: Vec<MeasurementRecord> = bins
                .iter()
                .enumerate()
                .map(|(i, bin)| MeasurementRecord {
                    id: format!("{run_id}-{i:04}"),
                    run_id: run_id.clone(),
                    timestamp_us: bin.start_us,
                    value: bin.mbps,
                    unit: UNIT_MBPS.into(),
                    descriptor: descriptor.clone(),
                })
                .collect();
            if !records.is_empty() {
                report.batches.push(RecordBatch {
                    source: Method::Passive,
                    submitter: analysis_id.to_string(),
                    records,
                });
            }
        }

        if key.transport == Transport::Tcp {
            let samples = ack_latency(flow)?;
            if !samples.is_empty() {
                let descriptor = TraceDescriptor {
                    metric: MetricKind::PassiveLatency,
                    ..context.clone()
                };
                let run_id = format!("{analysis_id}-f{flow_idx}-lat");
                let records: Vec<MeasurementRecord> = samples
                    .iter()
                    .enumerate()
                    .map(|(i, sample)| MeasurementRecord {
                        id: format!("{run_id}-{i:04}"),
                        run_id: run_id.clone(),
                        timestamp_us: sample.data_timestamp_us,
                        value: sample.rtt_ms,
                        unit: UNIT_MS.into(),
                        descriptor: descriptor.clone(),
                    })
                    .collect();
                report.batches.push(RecordBatch {
                    source: Method::Passive,
                    submitter: analysis_id.to_string(),
                    records,
                });
            }
        }
    }
    Ok(report)
}

/// The half whose first payload-carrying packet is earliest; flows with a
/// single data direction get that one.
fn primary_half(flow: &FlowRecords) -> FlowDirection {
    let first_payload = |packets: &[crate::pcap::PacketRecord]| {
        packets
            .iter()
            .find(|p| p.payload_len > 0)
            .map(|p| p.timestamp_us)
    };
    match (first_payload(&flow.a_to_b), first_payload(&flow.b_to_a)) {
        (Some(a), Some(b)) if b < a => FlowDirection::BToA,
        (None, Some(_)) => FlowDirection::BToA,
        _ => FlowDirection::AToB,
    }
}

/// Runs the analysis and pushes every batch to the sink. Batches that
/// fail to submit are kept in the report; failures are collected into the
/// warning list so partial results still land.
pub fn analyze_and_submit(
    input: &[u8],
    config: &AnalyzerConfig,
    context: &TraceDescriptor,
    analysis_id: &str,
    sink: &dyn RecordSink,
) -> Result<AnalysisReport, AnalyzerError> {
    let mut report = analyze_capture(input, config, context, analysis_id)?;
    for batch in &report.batches {
        if let Err(e) = sink.submit(batch) {
            report.warnings.push(format!(
                "batch {} failed to submit: {e}",
                batch.records[0].run_id
            ));
        }
    }
    Ok(report)
}
