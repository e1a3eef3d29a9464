//! Replay-semantics tests against a brute-force sample-and-hold oracle.

use measurement_core::{
    AccessTechnology, Direction, Method, MetricKind, SegmentId, TraceDescriptor,
};
use proptest::prelude::*;
use trace_library::{NetworkTrace, ReplayQuery, Series};

fn descriptor() -> TraceDescriptor {
    TraceDescriptor {
        method: Method::Active,
        metric: MetricKind::TcpBandwidth,
        segment: SegmentId::MecCloud,
        direction: Direction::Upstream,
        access_technology: AccessTechnology::Lte,
        cross_traffic_mbps: 0.0,
        num_clients: None,
    }
}

/// Linear scan over the raw points: the independent oracle for
/// sample-and-hold with backward hold.
fn oracle_hold(points: &[(i64, f64)], t_us: i64) -> f64 {
    let mut value = points[0].1;
    for (offset, v) in points {
        if *offset <= t_us {
            value = *v;
        } else {
            break;
        }
    }
    value
}

fn arb_points() -> impl Strategy<Value = Vec<(i64, f64)>> {
    proptest::collection::btree_map(0i64..5_000_000, 0.0f64..100.0, 1..40)
        .prop_map(|m| m.into_iter().collect())
}

proptest! {
    #[test]
    fn hold_matches_linear_scan_oracle(points in arb_points(), t in 0i64..6_000_000) {
        let trace = NetworkTrace::align(
            descriptor(),
            Series::from_points(points.clone()).unwrap(),
            Series::from_points(points.clone()).unwrap(),
            false,
        );
        // align with itself: identical series, origin = first offset
        let trace = trace.unwrap();
        let origin = points[0].0;
        let duration = points.last().unwrap().0 - origin;
        let t_eff = (t - origin).clamp(0, duration);
        let expected = oracle_hold(trace.bandwidth_series().points(), t_eff);
        let got = trace.get_bandwidth(ReplayQuery::from_us(t.max(origin) - origin).unwrap()).unwrap();
        prop_assert_eq!(got, expected);
    }

    /// Circular periodicity: get(t) == get(t + k * duration).
    #[test]
    fn circular_periodicity(points in arb_points(), t in 0i64..5_000_000, k in 1i64..4) {
        let series = Series::from_points(points).unwrap();
        let trace = NetworkTrace::align(descriptor(), series.clone(), series, true).unwrap();
        let d = trace.duration_us();
        let a = trace.get_bandwidth(ReplayQuery::from_us(t).unwrap()).unwrap();
        let b = trace
            .get_bandwidth(ReplayQuery::from_us(t + k * d.max(1)).unwrap())
            .unwrap();
        prop_assert_eq!(a, b);
    }

    /// Querying at a sample's exact offset returns that sample's value.
    #[test]
    fn hold_is_idempotent_at_sample_offsets(points in arb_points()) {
        let series = Series::from_points(points.clone()).unwrap();
        let origin = points[0].0;
        let trace = NetworkTrace::align(descriptor(), series.clone(), series, false).unwrap();
        for (offset, value) in trace.bandwidth_series().points() {
            let got = trace.get_bandwidth(ReplayQuery::from_us(*offset).unwrap()).unwrap();
            prop_assert_eq!(got, *value);
        }
        let _ = origin;
    }

    /// Between consecutive sample offsets the returned value is constant.
    #[test]
    fn hold_is_constant_between_samples(points in arb_points(), frac in 0.0f64..1.0) {
        let series = Series::from_points(points).unwrap();
        let trace = NetworkTrace::align(descriptor(), series.clone(), series, false).unwrap();
        let pts = trace.bandwidth_series().points();
        for w in pts.windows(2) {
            let (t0, v0) = w[0];
            let (t1, _) = w[1];
            if t1 - t0 > 1 {
                let mid = t0 + 1 + ((t1 - t0 - 2) as f64 * frac) as i64;
                let got = trace.get_bandwidth(ReplayQuery::from_us(mid).unwrap()).unwrap();
                prop_assert_eq!(got, v0);
            }
        }
    }
}

#[test]
fn negative_timestamps_rejected() {
    assert!(ReplayQuery::from_seconds(-0.1).is_err());
    assert!(ReplayQuery::from_us(-1).is_err());
}
