//! End-to-end probe tests over loopback sockets, with the in-process
//! shaper standing in for tc-netem style impairments. Timing-sensitive
//! tests share a lock so they never compete for the scheduler.

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::Duration;

use active_probes::shaper::{ShaperConfig, TcpShaper, UdpProxy, UdpProxyConfig};
use active_probes::*;
use measurement_core::{
    AccessTechnology, Direction, MetricKind, RecordBatch, RecordSink, SegmentId, SinkError,
};
use proptest::prelude::*;

static TIMING: Mutex<()> = Mutex::new(());

fn session(peer: std::net::SocketAddr, transport: Transport) -> ProbeSession {
    ProbeSession::new(ProbeRole::Client, peer, transport, SegmentId::AccessMec)
}

fn ctx(direction: Direction) -> ProbeContext {
    ProbeContext::new(direction, AccessTechnology::Wifi)
}

#[derive(Default)]
struct MockSink {
    batches: Mutex<Vec<RecordBatch>>,
    fail: bool,
}

impl RecordSink for MockSink {
    fn submit(&self, batch: &RecordBatch) -> Result<String, SinkError> {
        if self.fail {
            return Err(SinkError::Transport("mock sink down".into()));
        }
        let mut batches = self.batches.lock().unwrap();
        batches.push(batch.clone());
        Ok(format!("{}", batches.len()))
    }
}

#[test]
fn tcp_echo_baseline_is_fast_on_loopback() {
    let _guard = TIMING.lock().unwrap();
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let m = measure_echo_latency(
        &session(responder.addr(), Transport::Tcp),
        &LatencyProbeConfig::default(),
        &ctx(Direction::Downstream),
    )
    .unwrap();
    assert_eq!(m.records.len(), 25);
    assert_eq!(m.timeouts, 0);
    assert!(m.records.iter().all(|r| r.value < 5.0), "loopback RTT above 5 ms");
    assert!(m.records.iter().all(|r| r.value > 0.0));
    assert!(m
        .records
        .iter()
        .all(|r| r.descriptor.metric == MetricKind::TcpLatency));
}

#[test]
fn udp_echo_with_forced_timeouts_flags_them() {
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let proxy = UdpProxy::spawn(
        responder.addr(),
        UdpProxyConfig {
            drop_client_seqs: HashSet::from([3, 11, 19]),
            ..Default::default()
        },
    )
    .unwrap();
    let session = session(proxy.addr(), Transport::Udp).with_timeout(Duration::from_millis(300));
    let m = measure_echo_latency(
        &session,
        &LatencyProbeConfig::default(),
        &ctx(Direction::Downstream),
    )
    .unwrap();
    assert_eq!(m.records.len(), 22);
    assert_eq!(m.timeouts, 3);
    assert!(m
        .records
        .iter()
        .all(|r| r.descriptor.metric == MetricKind::UdpLatency));
}

#[test]
fn udp_echo_against_dead_port_is_measurement_error() {
    // bind a UDP socket that never answers
    let silent = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    let session = session(silent.local_addr().unwrap(), Transport::Udp)
        .with_timeout(Duration::from_millis(100));
    let err = measure_echo_latency(
        &session,
        &LatencyProbeConfig {
            num_probes: 3,
            payload_size: 1,
        },
        &ctx(Direction::Downstream),
    )
    .unwrap_err();
    assert!(matches!(err, ProbeError::Measurement(_)));
}

#[test]
fn bandwidth_both_directions_on_raw_loopback() {
    let _guard = TIMING.lock().unwrap();
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let cfg = BandwidthProbeConfig {
        num_packets: 256,
        packet_size: 1420,
        repetitions: 2,
    };
    for direction in [Direction::Upstream, Direction::Downstream] {
        let records = measure_stream_bandwidth(
            &session(responder.addr(), Transport::Tcp),
            &cfg,
            &ctx(direction),
        )
        .unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.value > 0.0));
        assert!(records.iter().all(|r| r.unit == "Mbps"));
        assert_eq!(records[0].run_id, records[1].run_id);
    }
}

#[test]
fn shaped_bandwidth_tracks_the_configured_rate() {
    let _guard = TIMING.lock().unwrap();
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let shaper = TcpShaper::spawn(responder.addr(), ShaperConfig::rate(30.0)).unwrap();
    let cfg = BandwidthProbeConfig {
        num_packets: 512,
        packet_size: 1420,
        repetitions: 3,
    };
    let records = measure_stream_bandwidth(
        &session(shaper.addr(), Transport::Tcp),
        &cfg,
        &ctx(Direction::Upstream),
    )
    .unwrap();
    let mut values: Vec<f64> = records.iter().map(|r| r.value).collect();
    values.sort_by(f64::total_cmp);
    let median = values[values.len() / 2];
    assert!(
        (median - 30.0).abs() / 30.0 < 0.25,
        "median {median} Mbps too far from 30"
    );
}

#[test]
fn capacity_through_rate_limited_path_recovers_bottleneck() {
    let _guard = TIMING.lock().unwrap();
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    // 10 Mbps bottleneck: a 1420 B packet serializes in ~1.14 ms, well
    // above scheduler noise
    let proxy = UdpProxy::spawn(
        responder.addr(),
        UdpProxyConfig {
            rate_mbps: Some(10.0),
            burst_bytes: Some(1420),
            ..Default::default()
        },
    )
    .unwrap();
    let m = measure_packet_pair_capacity(
        &session(proxy.addr(), Transport::Udp),
        &CapacityProbeConfig {
            num_pairs: 15,
            packet_size: 1420,
        },
        &ctx(Direction::Upstream),
    )
    .unwrap();
    assert!(
        (m.record.value - 10.0).abs() / 10.0 < 0.15,
        "estimated {} Mbps on a 10 Mbps bottleneck",
        m.record.value
    );
    assert_eq!(m.record.descriptor.metric, MetricKind::UdpCapacity);
}

#[test]
fn capacity_downstream_works_on_loopback() {
    let _guard = TIMING.lock().unwrap();
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let m = measure_packet_pair_capacity(
        &session(responder.addr(), Transport::Udp),
        &CapacityProbeConfig {
            num_pairs: 10,
            packet_size: 1420,
        },
        &ctx(Direction::Downstream),
    );
    // raw loopback dispersion may fall below clock resolution; both a
    // successful estimate and a discard-everything error are legitimate
    match m {
        Ok(m) => assert!(m.record.value > 0.0),
        Err(ProbeError::Measurement(_)) => {}
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn suite_isolates_item_failures_and_submits_the_rest() {
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let dead: std::net::SocketAddr = "127.0.0.1:1".parse().unwrap();
    let latency_cfg = LatencyProbeConfig {
        num_probes: 5,
        payload_size: 1,
    };
    let plan = vec![
        PlanItem {
            session: session(dead, Transport::Tcp).with_timeout(Duration::from_millis(200)),
            spec: ProbeSpec::TcpLatency(latency_cfg.clone()),
            context: ctx(Direction::Downstream),
        },
        PlanItem {
            session: session(responder.addr(), Transport::Tcp),
            spec: ProbeSpec::TcpLatency(latency_cfg),
            context: ctx(Direction::Downstream),
        },
    ];
    let sink = MockSink::default();
    let outcome = run_active_suite(&plan, Some(&sink), "suite-test");
    assert_eq!(outcome.batches.len(), 1);
    assert_eq!(outcome.errors.len(), 1);
    assert_eq!(outcome.errors[0].index, 0);
    assert_eq!(sink.batches.lock().unwrap().len(), 1);
}

#[test]
fn empty_plan_never_touches_the_sink() {
    let sink = MockSink {
        fail: true,
        ..Default::default()
    };
    let outcome = run_active_suite(&[], Some(&sink), "empty");
    assert!(outcome.batches.is_empty());
    assert!(outcome.errors.is_empty());
}

#[test]
fn suite_runs_items_strictly_in_sequence() {
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let latency_cfg = LatencyProbeConfig {
        num_probes: 8,
        payload_size: 1,
    };
    let plan: Vec<PlanItem> = (0..3)
        .map(|_| PlanItem {
            session: session(responder.addr(), Transport::Tcp),
            spec: ProbeSpec::TcpLatency(latency_cfg.clone()),
            context: ctx(Direction::Downstream),
        })
        .collect();
    let outcome = run_active_suite(&plan, None, "serial");
    assert_eq!(outcome.batches.len(), 3);
    // non-overlapping probe intervals: each batch's records all precede
    // the next batch's
    for pair in outcome.batches.windows(2) {
        let max_prev = pair[0].records.iter().map(|r| r.timestamp_us).max().unwrap();
        let min_next = pair[1].records.iter().map(|r| r.timestamp_us).min().unwrap();
        assert!(max_prev <= min_next);
    }
}

#[test]
fn submit_failure_is_recorded_but_suite_continues() {
    let responder = Responder::spawn("127.0.0.1:0".parse().unwrap()).unwrap();
    let plan = vec![PlanItem {
        session: session(responder.addr(), Transport::Tcp),
        spec: ProbeSpec::TcpLatency(LatencyProbeConfig {
            num_probes: 2,
            payload_size: 1,
        }),
        context: ctx(Direction::Upstream),
    }];
    let sink = MockSink {
        fail: true,
        ..Default::default()
    };
    let outcome = run_active_suite(&plan, Some(&sink), "failing-sink");
    assert_eq!(outcome.batches.len(), 1);
    assert_eq!(outcome.errors.len(), 1);
}

proptest! {
    /// Adding a constant one-way delay to every arrival changes no
    /// estimate: dispersion, not absolute delay, drives the figure.
    #[test]
    fn estimates_invariant_under_constant_delay(
        dispersions in proptest::collection::vec(proptest::option::of(2i64..1_000_000), 1..40),
        delay_us in 0i64..10_000_000,
    ) {
        let arrivals: Vec<[Option<i64>; 2]> = dispersions
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                Some(d) => [Some(i as i64 * 2_000_000), Some(i as i64 * 2_000_000 + d)],
                None => [Some(i as i64 * 2_000_000), None],
            })
            .collect();
        let shifted: Vec<[Option<i64>; 2]> = arrivals
            .iter()
            .map(|pair| pair.map(|t| t.map(|t| t + delay_us)))
            .collect();
        let base = dispersions_from_arrivals(&arrivals);
        let moved = dispersions_from_arrivals(&shifted);
        prop_assert_eq!(&base, &moved);
        let lost = base.iter().filter(|d| d.is_none()).count();
        prop_assume!(lost * 2 <= base.len());
        prop_assume!(base.iter().flatten().any(|d| *d > MIN_DISPERSION_US));
        let a = estimate_from_dispersions(&base, 1420).unwrap();
        let b = estimate_from_dispersions(&moved, 1420).unwrap();
        prop_assert_eq!(a.median_mbps, b.median_mbps);
        prop_assert_eq!(a.pair_estimates_mbps, b.pair_estimates_mbps);
    }
}
