//! Packet-pair bottleneck capacity. The sender emits pairs back to back;
//! the narrowest link spreads each pair out, and packet_size / dispersion
//! estimates that link's capacity. The reported value is the median of
//! the per-pair estimates, which shrugs off compression and expansion
//! outliers; the raw estimates are retained alongside it.

use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::time::Instant;

use measurement_core::{Direction, MeasurementRecord, MetricKind, UNIT_MBPS};

use crate::error::ProbeError;
use crate::protocol::{self, Opcode};
use crate::responder::{receive_capacity_packets, send_capacity_pairs};
use crate::session::{ProbeContext, ProbeSession, Transport};
use crate::CapacityProbeConfig;

/// Dispersions at or below the measurement clock resolution are unusable
/// and their pair is discarded.
pub const MIN_DISPERSION_US: i64 = 1;

/// Per-pair estimates and their median.
#[derive(Debug, Clone)]
pub struct CapacityEstimate {
    pub median_mbps: f64,
    pub pair_estimates_mbps: Vec<f64>,
    pub lost_pairs: u32,
    pub discarded_pairs: u32,
}

/// The reported record (median capacity) plus the raw per-pair data.
#[derive(Debug, Clone)]
pub struct CapacityMeasurement {
    pub record: MeasurementRecord,
    pub estimate: CapacityEstimate,
}

/// Turns per-pair arrival instants into dispersions in microseconds.
/// A pair missing either packet maps to `None`.
pub fn dispersions_from_arrivals(pairs: &[[Option<i64>; 2]]) -> Vec<Option<i64>> {
    pairs
        .iter()
        .map(|pair| match (pair[0], pair[1]) {
            (Some(first), Some(second)) => Some(second - first),
            _ => None,
        })
        .collect()
}

pub(crate) fn dispersions_from_arrival_instants(
    pairs: &[[Option<Instant>; 2]],
) -> Vec<Option<i64>> {
    pairs
        .iter()
        .map(|pair| match (pair[0], pair[1]) {
            (Some(first), Some(second)) => {
                Some(second.saturating_duration_since(first).as_micros() as i64)
            }
            _ => None,
        })
        .collect()
}

/// The estimator core: per-pair estimate = packet_size * 8 / dispersion,
/// capacity = median of the estimates. Pairs with a lost packet are
/// discarded; losing more than half of them is a measurement error, and
/// so is ending up with no usable dispersion at all.
pub fn estimate_from_dispersions(
    dispersions_us: &[Option<i64>],
    packet_size: u32,
) -> Result<CapacityEstimate, ProbeError> {
    let total = dispersions_us.len() as u32;
    if total == 0 {
        return Err(ProbeError::Measurement("no pairs were sent".into()));
    }
    let lost_pairs = dispersions_us.iter().filter(|d| d.is_none()).count() as u32;
    if lost_pairs * 2 > total {
        return Err(ProbeError::Measurement(format!(
            "{lost_pairs} of {total} pairs lost"
        )));
    }
    let mut discarded_pairs = 0u32;
    let mut estimates: Vec<f64> = Vec::with_capacity(total as usize);
    for dispersion in dispersions_us.iter().flatten() {
        if *dispersion <= MIN_DISPERSION_US {
            discarded_pairs += 1;
            continue;
        }
        // bits / microsecond == megabits / second
        estimates.push(packet_size as f64 * 8.0 / *dispersion as f64);
    }
    if estimates.is_empty() {
        return Err(ProbeError::Measurement(
            "every pair was lost or below clock resolution".into(),
        ));
    }
    let mut sorted = estimates.clone();
    sorted.sort_by(f64::total_cmp);
    let median_mbps = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    Ok(CapacityEstimate {
        median_mbps,
        pair_estimates_mbps: estimates,
        lost_pairs,
        discarded_pairs,
    })
}

/// Runs one packet-pair measurement over the session's UDP path. The
/// dispersion is always measured at the receiving side: the responder for
/// upstream probes (reported back over the control channel), this process
/// for downstream probes.
pub fn measure_packet_pair_capacity(
    session: &ProbeSession,
    cfg: &CapacityProbeConfig,
    ctx: &ProbeContext,
) -> Result<CapacityMeasurement, ProbeError> {
    cfg.validate()?;
    if session.transport != Transport::Udp {
        return Err(ProbeError::Measurement(
            "packet-pair capacity requires a UDP session".into(),
        ));
    }
    let dispersions = match ctx.direction {
        Direction::Upstream => upstream_dispersions(session, cfg)?,
        Direction::Downstream => downstream_dispersions(session, cfg)?,
    };
    let estimate = estimate_from_dispersions(&dispersions, cfg.packet_size)?;
    let run_id = ctx.run_id_or_generated("cap");
    let record = MeasurementRecord {
        id: format!("{run_id}-capacity"),
        run_id,
        timestamp_us: measurement_core::now_timestamp_us(),
        value: estimate.median_mbps,
        unit: UNIT_MBPS.into(),
        descriptor: ctx.descriptor(session, MetricKind::UdpCapacity),
    };
    Ok(CapacityMeasurement { record, estimate })
}

fn upstream_dispersions(
    session: &ProbeSession,
    cfg: &CapacityProbeConfig,
) -> Result<Vec<Option<i64>>, ProbeError> {
    let mut control = TcpStream::connect_timeout(&session.peer, session.timeout)?;
    control.set_nodelay(true)?;
    protocol::write_json(
        &mut control,
        Opcode::CapacityUpload,
        0,
        0,
        &protocol::CapacityRequest {
            num_pairs: cfg.num_pairs,
            packet_size: cfg.packet_size,
            udp_port: None,
        },
    )?;
    let (header, payload) = protocol::expect_message(&mut control, Opcode::CapacityReady)?;
    let ready: protocol::CapacityReady = protocol::parse_json(header.opcode, &payload)?;
    // probe datagrams go to the responder's main UDP port (same as TCP),
    // tagged with the session token, so a shaped path shapes them too
    let udp = UdpSocket::bind(local_any(&session.peer))?;
    send_capacity_pairs(&udp, session.peer, cfg.num_pairs, cfg.packet_size, ready.token)?;
    protocol::write_json(
        &mut control,
        Opcode::CapacitySent,
        0,
        0,
        &protocol::CapacitySent {
            packets: 2 * cfg.num_pairs,
        },
    )?;
    let (header, payload) = protocol::expect_message(&mut control, Opcode::CapacityReport)?;
    let report: protocol::CapacityReport = protocol::parse_json(header.opcode, &payload)?;
    Ok(report.dispersions_us)
}

fn downstream_dispersions(
    session: &ProbeSession,
    cfg: &CapacityProbeConfig,
) -> Result<Vec<Option<i64>>, ProbeError> {
    let udp = UdpSocket::bind(local_any(&session.peer))?;
    let udp_port = udp.local_addr()?.port();
    let mut control = TcpStream::connect_timeout(&session.peer, session.timeout)?;
    control.set_nodelay(true)?;
    protocol::write_json(
        &mut control,
        Opcode::CapacityDownload,
        protocol::FLAG_DOWNSTREAM,
        0,
        &protocol::CapacityRequest {
            num_pairs: cfg.num_pairs,
            packet_size: cfg.packet_size,
            udp_port: Some(udp_port),
        },
    )?;
    protocol::expect_message(&mut control, Opcode::Ok)?;
    let arrivals = receive_capacity_packets(&udp, cfg.num_pairs, cfg.packet_size);
    control.set_read_timeout(Some(session.timeout))?;
    let _ = protocol::read_message(&mut control); // CapacitySent marker
    Ok(dispersions_from_arrival_instants(&arrivals))
}

fn local_any(peer: &SocketAddr) -> SocketAddr {
    match peer {
        SocketAddr::V4(_) => "0.0.0.0:0".parse().unwrap(),
        SocketAddr::V6(_) => "[::]:0".parse().unwrap(),
    }
}
