//! HTTP round-trip tests: the service on an ephemeral port, exercised
//! through the blocking client.

use std::thread;

use aggregator_service::{serve, AggregatorClient, AppState, Store};
use measurement_core::{
    AccessTechnology, DescriptorQuery, Direction, MeasurementRecord, Method, MetricKind,
    RecordBatch, RecordQuery, SegmentId, TraceDescriptor, UNIT_MBPS,
};

fn descriptor(metric: MetricKind, cross: f64) -> TraceDescriptor {
    TraceDescriptor {
        method: metric.method(),
        metric,
        segment: SegmentId::AccessMec,
        direction: Direction::Downstream,
        access_technology: AccessTechnology::Wifi,
        cross_traffic_mbps: cross,
        num_clients: None,
    }
}

fn batch(run_id: &str, n: usize, cross: f64) -> RecordBatch {
    let d = descriptor(MetricKind::TcpBandwidth, cross);
    RecordBatch {
        source: Method::Active,
        submitter: "itest".into(),
        records: (0..n)
            .map(|i| MeasurementRecord {
                id: format!("{run_id}-{i}"),
                run_id: run_id.into(),
                timestamp_us: 1_000 * i as i64,
                value: i as f64,
                unit: UNIT_MBPS.into(),
                descriptor: d.clone(),
            })
            .collect(),
    }
}

/// Starts the service on its own runtime thread; the temp dir keeps the
/// store alive for the test's duration.
fn start_service(token: Option<String>) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(&dir.path().join("agg.sqlite")).unwrap();
    let state = AppState::new(store, token);
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let (addr, task) = serve(state, "127.0.0.1:0".parse().unwrap()).await.unwrap();
            addr_tx.send(addr).unwrap();
            let _ = task.await;
        });
    });
    let addr = addr_rx.recv().unwrap();
    (dir, format!("http://{addr}"))
}

#[test]
fn submit_query_round_trip_over_http() {
    let (_dir, base) = start_service(None);
    let client = AggregatorClient::new(&base);
    client.health().unwrap();
    let b = batch("http-run", 10, 0.0);
    let id = client.submit_batch(&b, None).unwrap();
    assert!(!id.is_empty());
    let got = client.query(&RecordQuery::default()).unwrap();
    assert_eq!(got, b.records);
}

#[test]
fn malformed_batch_is_rejected_with_diagnostics() {
    let (_dir, base) = start_service(None);
    let client = AggregatorClient::new(&base);
    let mut bad = batch("bad-run", 2, 0.0);
    bad.records[1].unit = "furlongs".into();
    let err = client.submit_batch(&bad, None).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("400"), "expected 400-class, got {message}");
    assert!(message.contains("unit"), "diagnostics missing field: {message}");
}

#[test]
fn idempotent_resubmission_over_http() {
    let (_dir, base) = start_service(None);
    let client = AggregatorClient::new(&base);
    let b = batch("idem-run", 4, 0.0);
    let first = client.submit_batch(&b, Some("probe-retry-1")).unwrap();
    let second = client.submit_batch(&b, Some("probe-retry-1")).unwrap();
    assert_eq!(first, second);
    assert_eq!(client.query(&RecordQuery::default()).unwrap().len(), 4);
}

#[test]
fn concurrent_self_writers_lose_nothing() {
    let (_dir, base) = start_service(None);
    let writers = 8;
    let per_writer = 25;
    let mut handles = Vec::new();
    for w in 0..writers {
        let base = base.clone();
        handles.push(thread::spawn(move || {
            let client = AggregatorClient::new(&base);
            for i in 0..per_writer {
                let mut d = descriptor(MetricKind::SelfMetric("dash_bitrate".into()), 0.0);
                d.num_clients = Some(writers as u32);
                let record = MeasurementRecord {
                    id: format!("self-{w}-{i}"),
                    run_id: format!("self-run-{w}"),
                    timestamp_us: (w * per_writer + i) as i64,
                    value: 0.7,
                    unit: UNIT_MBPS.into(),
                    descriptor: d,
                };
                client.ingest_self(&record, &format!("client-{w}")).unwrap();
            }
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    let client = AggregatorClient::new(&base);
    let stored = client
        .query(&RecordQuery {
            descriptor: DescriptorQuery {
                method: Some(Method::SelfReported),
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap();
    assert_eq!(stored.len(), writers * per_writer);
}

#[test]
fn token_gate_rejects_and_accepts() {
    let (_dir, base) = start_service(Some("sekrit".into()));
    let no_token = AggregatorClient::new(&base);
    assert!(no_token.query(&RecordQuery::default()).is_err());
    let with_token = AggregatorClient::new(&base).with_token(Some("sekrit".into()));
    with_token.query(&RecordQuery::default()).unwrap();
}

#[test]
fn export_over_http_opens_as_repository() {
    let (_dir, base) = start_service(None);
    let client = AggregatorClient::new(&base);
    client.submit_batch(&batch("exp-a", 3, 0.0), None).unwrap();
    client.submit_batch(&batch("exp-b", 3, 25.0), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let response = client
        .export(&RecordQuery::default(), out.path().to_str().unwrap())
        .unwrap();
    assert_eq!(response.manifest.entries.len(), 2);
    let repo = trace_library::TraceRepository::open(out.path()).unwrap();
    assert_eq!(repo.manifest().entries.len(), 2);
    let query = DescriptorQuery {
        cross_traffic_mbps: Some(25.0),
        ..Default::default()
    };
    let trace = repo.open_trace(&query, 5, false).unwrap();
    assert_eq!(trace.descriptor().cross_traffic_mbps, 25.0);
}

#[test]
fn query_equals_linear_scan_oracle_over_http() {
    let (_dir, base) = start_service(None);
    let client = AggregatorClient::new(&base);
    // a small seeded corpus with varied descriptors
    let mut all = Vec::new();
    for (i, (metric, cross, direction)) in [
        (MetricKind::TcpBandwidth, 0.0, Direction::Downstream),
        (MetricKind::UdpCapacity, 25.0, Direction::Upstream),
        (MetricKind::UdpLatency, 50.0, Direction::Downstream),
        (MetricKind::TcpLatency, 0.0, Direction::Upstream),
    ]
    .into_iter()
    .enumerate()
    {
        let mut d = descriptor(metric, cross);
        d.direction = direction;
        let unit = d.metric.canonical_unit().unwrap().to_string();
        let records: Vec<MeasurementRecord> = (0..6)
            .map(|k| MeasurementRecord {
                id: format!("scan-{i}-{k}"),
                run_id: format!("scan-run-{i}"),
                timestamp_us: (k * 10 + i) as i64,
                value: k as f64,
                unit: unit.clone(),
                descriptor: d.clone(),
            })
            .collect();
        all.extend(records.clone());
        client
            .submit_batch(
                &RecordBatch {
                    source: Method::Active,
                    submitter: "scan".into(),
                    records,
                },
                None,
            )
            .unwrap();
    }
    let filters = [
        RecordQuery::default(),
        RecordQuery {
            descriptor: DescriptorQuery {
                metric: Some(MetricKind::UdpCapacity),
                ..Default::default()
            },
            ..Default::default()
        },
        RecordQuery {
            descriptor: DescriptorQuery {
                direction: Some(Direction::Upstream),
                ..Default::default()
            },
            from_us: Some(10),
            to_us: Some(40),
            ..Default::default()
        },
        RecordQuery {
            run_id: Some("scan-run-2".into()),
            ..Default::default()
        },
        RecordQuery {
            from_us: Some(1_000_000),
            ..Default::default()
        },
    ];
    for filter in &filters {
        let got = client.query(filter).unwrap();
        let mut expected: Vec<MeasurementRecord> =
            all.iter().filter(|r| filter.matches(r)).cloned().collect();
        expected.sort_by(|a, b| {
            a.timestamp_us
                .cmp(&b.timestamp_us)
                .then_with(|| a.id.cmp(&b.id))
        });
        assert_eq!(got, expected);
    }
}
