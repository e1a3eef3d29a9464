//! Stream bandwidth measurement. The value is always computed from
//! receiver-side timestamps: the window opens at the first payload byte
//! and closes at the last, so connection setup never enters the figure.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Instant;

use measurement_core::{Direction, MeasurementRecord, MetricKind, UNIT_MBPS};

use crate::error::ProbeError;
use crate::protocol::{self, Opcode};
use crate::session::{ProbeContext, ProbeSession, Transport};
use crate::BandwidthProbeConfig;

const STREAM_CHUNK: usize = 64 * 1024;

/// Runs `cfg.repetitions` stream transfers and returns one tcp_bandwidth
/// record per repetition, in Mbps. Upstream sends towards the responder,
/// which reports the receiver-side figure back; downstream receives and
/// times locally.
pub fn measure_stream_bandwidth(
    session: &ProbeSession,
    cfg: &BandwidthProbeConfig,
    ctx: &ProbeContext,
) -> Result<Vec<MeasurementRecord>, ProbeError> {
    cfg.validate()?;
    if session.transport != Transport::Tcp {
        return Err(ProbeError::Measurement(
            "stream bandwidth requires a TCP session".into(),
        ));
    }
    let run_id = ctx.run_id_or_generated("bw");
    let descriptor = ctx.descriptor(session, MetricKind::TcpBandwidth);
    let mut records = Vec::with_capacity(cfg.repetitions as usize);
    for rep in 0..cfg.repetitions {
        let mbps = one_transfer(session, cfg, ctx.direction)?;
        records.push(MeasurementRecord {
            id: format!("{run_id}-{rep}"),
            run_id: run_id.clone(),
            timestamp_us: measurement_core::now_timestamp_us(),
            value: mbps,
            unit: UNIT_MBPS.into(),
            descriptor: descriptor.clone(),
        });
    }
    Ok(records)
}

fn one_transfer(
    session: &ProbeSession,
    cfg: &BandwidthProbeConfig,
    direction: Direction,
) -> Result<f64, ProbeError> {
    let mut stream = TcpStream::connect_timeout(&session.peer, session.timeout)?;
    stream.set_nodelay(true)?;
    let request = protocol::BandwidthRequest {
        num_packets: cfg.num_packets,
        packet_size: cfg.packet_size,
    };
    match direction {
        Direction::Upstream => {
            protocol::write_json(&mut stream, Opcode::BandwidthUpload, 0, 0, &request)?;
            protocol::expect_message(&mut stream, Opcode::Ok)?;
            let chunk = vec![0u8; cfg.packet_size as usize];
            for _ in 0..cfg.num_packets {
                stream.write_all(&chunk)?;
            }
            stream.flush()?;
            let (header, payload) = protocol::expect_message(&mut stream, Opcode::BandwidthReport)?;
            let report: protocol::BandwidthReport = protocol::parse_json(header.opcode, &payload)?;
            if report.elapsed_us == 0 {
                return Err(ProbeError::Measurement(
                    "receiver observed zero elapsed time".into(),
                ));
            }
            Ok(report.mbps)
        }
        Direction::Downstream => {
            protocol::write_json(
                &mut stream,
                Opcode::BandwidthDownload,
                protocol::FLAG_DOWNSTREAM,
                0,
                &request,
            )?;
            protocol::expect_message(&mut stream, Opcode::Ok)?;
            let total = cfg.num_packets as u64 * cfg.packet_size as u64;
            let mut buf = vec![0u8; STREAM_CHUNK];
            let mut received = 0u64;
            let mut first_byte: Option<Instant> = None;
            let mut last_byte = Instant::now();
            while received < total {
                let want = ((total - received) as usize).min(buf.len());
                let n = stream.read(&mut buf[..want])?;
                if n == 0 {
                    return Err(ProbeError::Measurement(format!(
                        "peer closed after {received} of {total} bytes"
                    )));
                }
                last_byte = Instant::now();
                if first_byte.is_none() {
                    first_byte = Some(last_byte);
                }
                received += n as u64;
            }
            let elapsed_us = last_byte.duration_since(first_byte.unwrap()).as_micros() as u64;
            if elapsed_us == 0 {
                return Err(ProbeError::Measurement(
                    "zero elapsed time between first and last byte".into(),
                ));
            }
            Ok(total as f64 * 8.0 / elapsed_us as f64)
        }
    }
}
