//! Echo round-trip latency. TCP probes reuse one established connection
//! (application-layer RTT); UDP probes are independent datagrams and
//! unanswered ones time out without producing a sample.

use std::net::{TcpStream, UdpSocket};
use std::time::Instant;

use measurement_core::{MeasurementRecord, MetricKind, UNIT_MS};

use crate::error::ProbeError;
use crate::protocol::{self, Header, Opcode, HEADER_LEN};
use crate::session::{ProbeContext, ProbeSession, Transport};
use crate::LatencyProbeConfig;

/// Latency samples plus how many probes went unanswered.
#[derive(Debug, Clone)]
pub struct LatencyMeasurement {
    pub records: Vec<MeasurementRecord>,
    pub timeouts: u32,
}

/// Sends `cfg.num_probes` echo requests and returns one latency record
/// per answered probe, in milliseconds. The metric kind follows the
/// session transport. Every probe timing out is a measurement error.
pub fn measure_echo_latency(
    session: &ProbeSession,
    cfg: &LatencyProbeConfig,
    ctx: &ProbeContext,
) -> Result<LatencyMeasurement, ProbeError> {
    cfg.validate()?;
    let (rtts_us, timeouts) = match session.transport {
        Transport::Tcp => (tcp_echo(session, cfg)?, 0),
        Transport::Udp => udp_echo(session, cfg)?,
    };
    if rtts_us.is_empty() {
        return Err(ProbeError::Measurement(format!(
            "all {} probes timed out",
            cfg.num_probes
        )));
    }
    let metric = match session.transport {
        Transport::Tcp => MetricKind::TcpLatency,
        Transport::Udp => MetricKind::UdpLatency,
    };
    let run_id = ctx.run_id_or_generated("rtt");
    let descriptor = ctx.descriptor(session, metric);
    let records = rtts_us
        .iter()
        .enumerate()
        .map(|(i, rtt_us)| MeasurementRecord {
            id: format!("{run_id}-{i}"),
            run_id: run_id.clone(),
            timestamp_us: measurement_core::now_timestamp_us(),
            value: *rtt_us as f64 / 1000.0,
            unit: UNIT_MS.into(),
            descriptor: descriptor.clone(),
        })
        .collect();
    Ok(LatencyMeasurement { records, timeouts })
}

fn tcp_echo(session: &ProbeSession, cfg: &LatencyProbeConfig) -> Result<Vec<u64>, ProbeError> {
    let mut stream = TcpStream::connect_timeout(&session.peer, session.timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(session.timeout))?;
    let payload = vec![0u8; cfg.payload_size as usize];
    let mut rtts = Vec::with_capacity(cfg.num_probes as usize);
    for seq in 0..cfg.num_probes {
        let start = Instant::now();
        protocol::write_message(&mut stream, Opcode::EchoRequest, 0, seq, &payload)?;
        let (header, echoed) = protocol::expect_message(&mut stream, Opcode::EchoReply)?;
        let rtt = start.elapsed();
        if header.seq != seq || echoed.len() != payload.len() {
            return Err(ProbeError::Handshake(format!(
                "echo reply mismatch: seq {} for probe {seq}",
                header.seq
            )));
        }
        rtts.push(rtt.as_micros() as u64);
    }
    Ok(rtts)
}

fn udp_echo(
    session: &ProbeSession,
    cfg: &LatencyProbeConfig,
) -> Result<(Vec<u64>, u32), ProbeError> {
    let udp = UdpSocket::bind(match session.peer {
        std::net::SocketAddr::V4(_) => "0.0.0.0:0",
        std::net::SocketAddr::V6(_) => "[::]:0",
    })?;
    udp.connect(session.peer)?;
    udp.set_read_timeout(Some(session.timeout))?;
    let datagram_payload = vec![0u8; cfg.payload_size as usize];
    let mut recv_buf = vec![0u8; HEADER_LEN + cfg.payload_size as usize + 64];
    let mut rtts = Vec::new();
    let mut timeouts = 0u32;
    for seq in 0..cfg.num_probes {
        let mut message =
            Header::new(Opcode::EchoRequest, 0, seq, datagram_payload.len() as u32).encode().to_vec();
        message.extend_from_slice(&datagram_payload);
        let start = Instant::now();
        udp.send(&message)?;
        let deadline = start + session.timeout;
        let answered = loop {
            let now = Instant::now();
            if now >= deadline {
                break None;
            }
            udp.set_read_timeout(Some(deadline - now))?;
            match udp.recv(&mut recv_buf) {
                Ok(len) if len >= HEADER_LEN => {
                    let Ok(header) = Header::decode(recv_buf[..HEADER_LEN].try_into().unwrap())
                    else {
                        continue;
                    };
                    if header.opcode == Opcode::EchoReply && header.seq == seq {
                        break Some(start.elapsed());
                    }
                    // stale reply to an earlier probe: keep waiting
                }
                Ok(_) => continue,
                Err(ref e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut =>
                {
                    break None;
                }
                Err(e) => return Err(e.into()),
            }
        };
        match answered {
            Some(rtt) => rtts.push(rtt.as_micros() as u64),
            None => timeouts += 1,
        }
    }
    Ok((rtts, timeouts))
}
