use measurement_core::{MeasurementRecord, MetricKind, TraceDescriptor, UNIT_MBPS, UNIT_MS};

use crate::error::TraceError;
use crate::series::Series;

/// A replay timestamp, microseconds from the trace origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayQuery {
    pub timestamp_us: i64,
}

impl ReplayQuery {
    pub fn from_us(timestamp_us: i64) -> Result<ReplayQuery, TraceError> {
        if timestamp_us < 0 {
            return Err(TraceError::NegativeTimestamp);
        }
        Ok(ReplayQuery { timestamp_us })
    }

    /// Seconds are rounded to the nearest microsecond.
    pub fn from_seconds(seconds: f64) -> Result<ReplayQuery, TraceError> {
        if !(seconds >= 0.0) {
            return Err(TraceError::NegativeTimestamp);
        }
        ReplayQuery::from_us((seconds * 1e6).round() as i64)
    }
}

/// Aligned, replayable bandwidth and RTT series for one network setup.
///
/// Bandwidth values are Mbps, RTT values milliseconds. Either series may
/// be empty when the source file only carried one kind of metric; queries
/// against an empty series fail. A circular trace wraps query timestamps
/// modulo its duration, a non-circular one clamps them to the last sample.
#[derive(Debug, Clone)]
pub struct NetworkTrace {
    descriptor: TraceDescriptor,
    bandwidth: Series,
    rtt: Series,
    duration_us: i64,
    circular: bool,
}

impl NetworkTrace {
    /// Builds a trace from the raw records of one trace file. Records are
    /// ordered by (timestamp, id); offsets are relative to the earliest
    /// record. Bandwidth-like metrics feed the bandwidth series, latency
    /// metrics the RTT series; self metrics are routed by their unit.
    pub fn from_records(
        descriptor: TraceDescriptor,
        records: &[MeasurementRecord],
        circular: bool,
    ) -> Result<NetworkTrace, TraceError> {
        if records.is_empty() {
            return Err(TraceError::EmptySeries("trace"));
        }
        let mut ordered: Vec<&MeasurementRecord> = records.iter().collect();
        ordered.sort_by(|a, b| {
            a.timestamp_us
                .cmp(&b.timestamp_us)
                .then_with(|| a.id.cmp(&b.id))
        });
        let origin = ordered[0].timestamp_us;
        let mut bandwidth = Vec::new();
        let mut rtt = Vec::new();
        for record in ordered {
            let offset = record.timestamp_us - origin;
            let route_to_rtt = match &record.descriptor.metric {
                m if m.is_latency() => true,
                MetricKind::SelfMetric(_) if record.unit == UNIT_MS => true,
                MetricKind::SelfMetric(_) if record.unit == UNIT_MBPS => false,
                MetricKind::SelfMetric(_) => {
                    return Err(TraceError::UnroutableMetric {
                        id: record.id.clone(),
                        metric: record.descriptor.metric.to_string(),
                    })
                }
                _ => false,
            };
            if route_to_rtt {
                rtt.push((offset, record.value));
            } else {
                bandwidth.push((offset, record.value));
            }
        }
        let bandwidth = Series::from_samples(bandwidth)?;
        let rtt = Series::from_samples(rtt)?;
        let duration_us = bandwidth
            .last_offset()
            .unwrap_or(0)
            .max(rtt.last_offset().unwrap_or(0));
        Ok(NetworkTrace {
            descriptor,
            bandwidth,
            rtt,
            duration_us,
            circular,
        })
    }

    /// Aligns a bandwidth and an RTT series that were not collected in
    /// sync: the common origin is the later first sample, samples before
    /// it are dropped, and the duration is the smaller of the two
    /// remaining extents (samples past it are dropped as well).
    pub fn align(
        descriptor: TraceDescriptor,
        bandwidth: Series,
        rtt: Series,
        circular: bool,
    ) -> Result<NetworkTrace, TraceError> {
        let bw_first = bandwidth.first_offset().ok_or(TraceError::EmptySeries("bandwidth"))?;
        let rtt_first = rtt.first_offset().ok_or(TraceError::EmptySeries("rtt"))?;
        let origin = bw_first.max(rtt_first);
        let bw_shifted = bandwidth.rebase(origin, None);
        let rtt_shifted = rtt.rebase(origin, None);
        if bw_shifted.is_empty() || rtt_shifted.is_empty() {
            return Err(TraceError::NoOverlap);
        }
        let duration_us = bw_shifted
            .last_offset()
            .unwrap()
            .min(rtt_shifted.last_offset().unwrap());
        let bandwidth = bw_shifted.rebase(0, Some(duration_us));
        let rtt = rtt_shifted.rebase(0, Some(duration_us));
        Ok(NetworkTrace {
            descriptor,
            bandwidth,
            rtt,
            duration_us,
            circular,
        })
    }

    pub fn descriptor(&self) -> &TraceDescriptor {
        &self.descriptor
    }

    pub fn bandwidth_series(&self) -> &Series {
        &self.bandwidth
    }

    pub fn rtt_series(&self) -> &Series {
        &self.rtt
    }

    pub fn duration_us(&self) -> i64 {
        self.duration_us
    }

    pub fn circular(&self) -> bool {
        self.circular
    }

    fn effective_timestamp(&self, q: ReplayQuery, series: &Series) -> i64 {
        if self.circular {
            if self.duration_us == 0 {
                0
            } else {
                q.timestamp_us % self.duration_us
            }
        } else {
            q.timestamp_us.min(series.last_offset().unwrap_or(0))
        }
    }

    /// Sample-and-hold bandwidth in Mbps at the queried time.
    pub fn get_bandwidth(&self, q: ReplayQuery) -> Result<f64, TraceError> {
        if self.bandwidth.is_empty() {
            return Err(TraceError::EmptySeries("bandwidth"));
        }
        let t = self.effective_timestamp(q, &self.bandwidth);
        Ok(self.bandwidth.value_at(t).unwrap())
    }

    /// Sample-and-hold RTT in milliseconds at the queried time.
    pub fn get_rtt(&self, q: ReplayQuery) -> Result<f64, TraceError> {
        if self.rtt.is_empty() {
            return Err(TraceError::EmptySeries("rtt"));
        }
        let t = self.effective_timestamp(q, &self.rtt);
        Ok(self.rtt.value_at(t).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use measurement_core::{AccessTechnology, Direction, SegmentId};

    fn descriptor(metric: MetricKind) -> TraceDescriptor {
        TraceDescriptor {
            method: metric.method(),
            metric,
            segment: SegmentId::AccessMec,
            direction: Direction::Downstream,
            access_technology: AccessTechnology::Wifi,
            cross_traffic_mbps: 0.0,
            num_clients: None,
        }
    }

    fn bw_trace(points: Vec<(i64, f64)>, duration_us: i64, circular: bool) -> NetworkTrace {
        NetworkTrace {
            descriptor: descriptor(MetricKind::TcpBandwidth),
            bandwidth: Series::from_points(points).unwrap(),
            rtt: Series::empty(),
            duration_us,
            circular,
        }
    }

    #[test]
    fn hold_previous_sample() {
        let t = bw_trace(vec![(0, 10.0), (1_000_000, 20.0)], 1_000_000, false);
        assert_eq!(
            t.get_bandwidth(ReplayQuery::from_seconds(0.5).unwrap()).unwrap(),
            10.0
        );
    }

    #[test]
    fn circular_wraps_modulo_duration() {
        let t = bw_trace(vec![(0, 10.0), (1_000_000, 20.0)], 2_000_000, true);
        assert_eq!(
            t.get_bandwidth(ReplayQuery::from_seconds(2.5).unwrap()).unwrap(),
            10.0
        );
        // wrap identity: query at exactly the duration maps to offset 0
        assert_eq!(
            t.get_bandwidth(ReplayQuery::from_seconds(2.0).unwrap()).unwrap(),
            10.0
        );
    }

    #[test]
    fn clamp_past_end_when_not_circular() {
        let t = bw_trace(vec![(0, 10.0), (1_000_000, 20.0)], 1_000_000, false);
        assert_eq!(
            t.get_bandwidth(ReplayQuery::from_seconds(100.0).unwrap()).unwrap(),
            20.0
        );
    }

    #[test]
    fn rtt_contract_mirrors_bandwidth() {
        let t = NetworkTrace {
            descriptor: descriptor(MetricKind::UdpLatency),
            bandwidth: Series::empty(),
            rtt: Series::from_points(vec![(0, 12.0), (2_000_000, 30.0)]).unwrap(),
            duration_us: 2_000_000,
            circular: false,
        };
        assert_eq!(t.get_rtt(ReplayQuery::from_seconds(1.9).unwrap()).unwrap(), 12.0);
        assert_eq!(t.get_rtt(ReplayQuery::from_seconds(2.0).unwrap()).unwrap(), 30.0);
        assert!(t.get_bandwidth(ReplayQuery::from_us(0).unwrap()).is_err());
    }

    #[test]
    fn align_trims_to_common_origin() {
        // bandwidth starts at 2.0 s, rtt at 3.0 s -> origin 3.0, earlier samples dropped
        let bw = Series::from_points(vec![(2_000_000, 1.0), (3_500_000, 2.0), (9_000_000, 3.0)])
            .unwrap();
        let rtt = Series::from_points(vec![(3_000_000, 10.0), (4_000_000, 11.0)]).unwrap();
        let t = NetworkTrace::align(descriptor(MetricKind::TcpBandwidth), bw, rtt, false).unwrap();
        assert_eq!(t.bandwidth_series().points(), &[(500_000, 2.0)]);
        assert_eq!(t.rtt_series().points(), &[(0, 10.0), (1_000_000, 11.0)]);
        assert_eq!(t.duration_us(), 1_000_000);
    }

    #[test]
    fn align_identity_when_already_aligned() {
        let bw = Series::from_points(vec![(0, 1.0), (1_000_000, 2.0)]).unwrap();
        let rtt = Series::from_points(vec![(0, 10.0), (1_000_000, 11.0)]).unwrap();
        let t = NetworkTrace::align(
            descriptor(MetricKind::TcpBandwidth),
            bw.clone(),
            rtt.clone(),
            false,
        )
        .unwrap();
        assert_eq!(t.bandwidth_series(), &bw);
        assert_eq!(t.rtt_series(), &rtt);
    }

    #[test]
    fn align_rejects_disjoint_series() {
        let bw = Series::from_points(vec![(0, 1.0), (1_000_000, 2.0)]).unwrap();
        let rtt = Series::from_points(vec![(5_000_000, 10.0)]).unwrap();
        assert!(matches!(
            NetworkTrace::align(descriptor(MetricKind::TcpBandwidth), bw, rtt, false),
            Err(TraceError::NoOverlap)
        ));
    }

    #[test]
    fn from_records_routes_by_metric() {
        let d = descriptor(MetricKind::UdpLatency);
        let records: Vec<MeasurementRecord> = (0..3)
            .map(|i| MeasurementRecord {
                id: format!("r-{i}"),
                run_id: "r".into(),
                timestamp_us: 1_000_000 * i,
                value: 10.0 + i as f64,
                unit: UNIT_MS.into(),
                descriptor: d.clone(),
            })
            .collect();
        let t = NetworkTrace::from_records(d, &records, false).unwrap();
        assert!(t.bandwidth_series().is_empty());
        assert_eq!(t.rtt_series().len(), 3);
        assert_eq!(t.duration_us(), 2_000_000);
    }
}
