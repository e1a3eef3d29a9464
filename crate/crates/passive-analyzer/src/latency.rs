use crate::error::AnalyzerError;
use crate::flow::FlowRecords;
use crate::pcap::{PacketRecord, Transport, TCP_ACK};

/// One ACK-matched latency sample. The sample is stamped at the data
/// segment's capture time; `rtt_ms` is the gap to the first later reverse
/// packet whose cumulative ACK covers the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencySample {
    pub data_timestamp_us: i64,
    pub ack_timestamp_us: i64,
    pub rtt_ms: f64,
}

/// Computes ACK-matched round-trip latency for a TCP flow, both data
/// directions. For each payload-carrying segment the sample is the time
/// to the first strictly later reverse-direction packet whose ACK number
/// reaches seq + payload_len. A cumulative ACK may satisfy several
/// segments; each segment yields at most one sample. Segments whose
/// sequence number does not advance past the highest payload sequence
/// already seen count as retransmissions: they yield no sample and cancel
/// any pending sample they overlap, since the matching ACK would be
/// ambiguous.
pub fn ack_latency(flow: &FlowRecords) -> Result<Vec<LatencySample>, AnalyzerError> {
    if flow
        .a_to_b
        .iter()
        .chain(flow.b_to_a.iter())
        .any(|p| p.transport != Transport::Tcp)
    {
        return Err(AnalyzerError::UnsupportedMetric);
    }
    let mut samples = one_direction(&flow.a_to_b, &flow.b_to_a);
    samples.extend(one_direction(&flow.b_to_a, &flow.a_to_b));
    samples.sort_by_key(|s| (s.data_timestamp_us, s.ack_timestamp_us));
    Ok(samples)
}

struct Pending {
    seq_start: u64,
    seq_end: u64,
    sent_us: i64,
}

fn one_direction(data_dir: &[PacketRecord], ack_dir: &[PacketRecord]) -> Vec<LatencySample> {
    let mut samples = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut highest_seq: Option<u64> = None;

    // merge by timestamp; at equal timestamps data segments are processed
    // first so an ACK is only matched when strictly later
    let mut di = 0;
    let mut ai = 0;
    while di < data_dir.len() || ai < ack_dir.len() {
        let take_data = match (data_dir.get(di), ack_dir.get(ai)) {
            (Some(d), Some(a)) => d.timestamp_us <= a.timestamp_us,
            (Some(_), None) => true,
            _ => false,
        };
        if take_data {
            let packet = &data_dir[di];
            di += 1;
            if packet.payload_len == 0 {
                continue;
            }
            let Some(tcp) = packet.tcp else { continue };
            let seq = tcp.seq as u64;
            let seq_end = seq + packet.payload_len as u64;
            if highest_seq.is_some_and(|h| seq <= h) {
                // retransmission: drop overlapping pending candidates
                pending.retain(|c| c.seq_end <= seq || c.seq_start >= seq_end);
            } else {
                pending.push(Pending {
                    seq_start: seq,
                    seq_end,
                    sent_us: packet.timestamp_us,
                });
                highest_seq = Some(seq);
            }
        } else {
            let packet = &ack_dir[ai];
            ai += 1;
            let Some(tcp) = packet.tcp else { continue };
            if tcp.flags & TCP_ACK == 0 {
                continue;
            }
            let ack = tcp.ack as u64;
            pending.retain(|c| {
                if c.seq_end <= ack && c.sent_us < packet.timestamp_us {
                    samples.push(LatencySample {
                        data_timestamp_us: c.sent_us,
                        ack_timestamp_us: packet.timestamp_us,
                        rtt_ms: (packet.timestamp_us - c.sent_us) as f64 / 1_000.0,
                    });
                    false
                } else {
                    true
                }
            });
        }
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::extract_flows;
    use crate::pcap::{parse_capture, TCP_ACK};
    use crate::pcap_write::CaptureWriter;

    fn flow_of(writer: CaptureWriter) -> FlowRecords {
        let packets = parse_capture(&writer.finish()).unwrap().packets;
        let flows = extract_flows(&packets, None);
        assert_eq!(flows.len(), 1);
        flows.into_values().next().unwrap()
    }

    #[test]
    fn single_exchange_yields_one_sample() {
        let mut w = CaptureWriter::new();
        let client = "10.0.0.1:40000".parse().unwrap();
        let server = "10.0.0.2:8080".parse().unwrap();
        w.push_tcp(0, client, server, 1000, 0, TCP_ACK, 100);
        w.push_tcp(25_000, server, client, 1, 1100, TCP_ACK, 0);
        let samples = ack_latency(&flow_of(w)).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].rtt_ms, 25.0);
    }

    #[test]
    fn cumulative_ack_satisfies_multiple_segments() {
        let mut w = CaptureWriter::new();
        let client = "10.0.0.1:40000".parse().unwrap();
        let server = "10.0.0.2:8080".parse().unwrap();
        w.push_tcp(0, client, server, 1000, 0, TCP_ACK, 100);
        w.push_tcp(1_000, client, server, 1100, 0, TCP_ACK, 100);
        w.push_tcp(10_000, server, client, 1, 1200, TCP_ACK, 0);
        let samples = ack_latency(&flow_of(w)).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].rtt_ms, 10.0);
        assert_eq!(samples[1].rtt_ms, 9.0);
    }

    #[test]
    fn retransmitted_segment_yields_zero_samples() {
        let mut w = CaptureWriter::new();
        let client = "10.0.0.1:40000".parse().unwrap();
        let server = "10.0.0.2:8080".parse().unwrap();
        w.push_tcp(0, client, server, 1000, 0, TCP_ACK, 100);
        w.push_tcp(50_000, client, server, 1000, 0, TCP_ACK, 100); // retransmit
        w.push_tcp(60_000, server, client, 1, 1100, TCP_ACK, 0);
        let samples = ack_latency(&flow_of(w)).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn ack_never_matches_earlier_or_equal_time(){
        let mut w = CaptureWriter::new();
        let client = "10.0.0.1:40000".parse().unwrap();
        let server = "10.0.0.2:8080".parse().unwrap();
        // ACK arrives before the data segment was ever sent (stale ack number)
        w.push_tcp(0, server, client, 1, 1100, TCP_ACK, 0);
        w.push_tcp(1_000, client, server, 1000, 0, TCP_ACK, 100);
        let samples = ack_latency(&flow_of(w)).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn no_acks_means_no_samples() {
        let mut w = CaptureWriter::new();
        let client = "10.0.0.1:40000".parse().unwrap();
        let server = "10.0.0.2:8080".parse().unwrap();
        w.push_tcp(0, client, server, 1000, 0, 0, 100);
        let samples = ack_latency(&flow_of(w)).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn udp_flow_is_unsupported() {
        let mut w = CaptureWriter::new();
        w.push_udp(
            0,
            "10.0.0.1:1000".parse().unwrap(),
            "10.0.0.2:2000".parse().unwrap(),
            10,
        );
        assert!(matches!(
            ack_latency(&flow_of(w)),
            Err(AnalyzerError::UnsupportedMetric)
        ));
    }

    #[test]
    fn samples_are_strictly_positive() {
        let mut w = CaptureWriter::new();
        let client = "10.0.0.1:40000".parse().unwrap();
        let server = "10.0.0.2:8080".parse().unwrap();
        // data and ack share a timestamp: "later" must be strict, no sample
        w.push_tcp(5_000, client, server, 1, 0, TCP_ACK, 10);
        w.push_tcp(5_000, server, client, 1, 11, TCP_ACK, 0);
        let samples = ack_latency(&flow_of(w)).unwrap();
        assert!(samples.is_empty());
    }
}
