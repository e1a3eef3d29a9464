//! The probe responder endpoint, run by the observer and the remote
//! server. One TCP listener handles control and stream probes; a UDP
//! socket on the same port answers echo datagrams and collects capacity
//! probe packets, which are demultiplexed to their session by the token
//! carried in the header flags. Each accepted connection gets its own
//! thread, so independent initiators proceed concurrently.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::error::ProbeError;
use crate::protocol::{self, Header, Opcode, HEADER_LEN};

const UDP_IDLE_TIMEOUT: Duration = Duration::from_secs(2);
const UDP_POLL: Duration = Duration::from_millis(100);
const STREAM_CHUNK: usize = 64 * 1024;

type CapacityRegistry = Arc<Mutex<HashMap<u16, mpsc::Sender<(u32, Instant)>>>>;

pub struct Responder;

pub struct ResponderHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ResponderHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the accept and echo loops to wind down. Best effort; running
    /// probe sessions finish on their own.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
    }
}

impl Drop for ResponderHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

impl Responder {
    /// Binds TCP and UDP on the same port and starts serving. With port 0
    /// the pair is retried until a port free on both transports is found.
    pub fn spawn(bind: SocketAddr) -> std::io::Result<ResponderHandle> {
        let (listener, udp) = bind_pair(bind)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let registry: CapacityRegistry = Arc::new(Mutex::new(HashMap::new()));

        let accept_stop = Arc::clone(&stop);
        let accept_registry = Arc::clone(&registry);
        thread::Builder::new()
            .name("probe-accept".into())
            .spawn(move || accept_loop(listener, accept_stop, accept_registry))?;

        let echo_stop = Arc::clone(&stop);
        thread::Builder::new()
            .name("probe-udp".into())
            .spawn(move || udp_loop(udp, echo_stop, registry))?;

        Ok(ResponderHandle { addr, stop })
    }
}

pub(crate) fn bind_pair(bind: SocketAddr) -> std::io::Result<(TcpListener, UdpSocket)> {
    let mut last_err = None;
    for _ in 0..16 {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        match UdpSocket::bind(addr) {
            Ok(udp) => return Ok((listener, udp)),
            Err(e) if bind.port() == 0 => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, registry: CapacityRegistry) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match stream {
            Ok(stream) => {
                let registry = Arc::clone(&registry);
                let _ = thread::Builder::new().name("probe-conn".into()).spawn(move || {
                    let peer = stream.peer_addr().ok();
                    if let Err(e) = handle_connection(stream, registry) {
                        debug!("probe connection {peer:?} ended: {e}");
                    }
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

/// Answers echo datagrams and routes capacity probe packets to their
/// session's collector. Arrival instants are taken right after recv so
/// the dispersion never includes routing overhead.
fn udp_loop(udp: UdpSocket, stop: Arc<AtomicBool>, registry: CapacityRegistry) {
    let _ = udp.set_read_timeout(Some(UDP_POLL));
    let mut buf = vec![0u8; 65536];
    while !stop.load(Ordering::SeqCst) {
        match udp.recv_from(&mut buf) {
            Ok((len, src)) => {
                let arrived = Instant::now();
                if len < HEADER_LEN {
                    continue;
                }
                let Ok(header) = Header::decode(buf[..HEADER_LEN].try_into().unwrap()) else {
                    continue;
                };
                match header.opcode {
                    Opcode::EchoRequest => {
                        let reply = Header::new(
                            Opcode::EchoReply,
                            header.flags,
                            header.seq,
                            header.payload_len,
                        );
                        buf[..HEADER_LEN].copy_from_slice(&reply.encode());
                        let _ = udp.send_to(&buf[..len], src);
                    }
                    Opcode::CapacityPacket => {
                        if let Some(tx) = registry.lock().unwrap().get(&header.flags) {
                            let _ = tx.send((header.seq, arrived));
                        }
                    }
                    _ => {}
                }
            }
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue
            }
            Err(e) => {
                warn!("udp recv failed: {e}");
                break;
            }
        }
    }
}

fn handle_connection(mut stream: TcpStream, registry: CapacityRegistry) -> Result<(), ProbeError> {
    stream.set_nodelay(true)?;
    loop {
        let (header, payload) = match protocol::read_message(&mut stream) {
            Ok(m) => m,
            Err(ProbeError::Session(ref e))
                if e.kind() == std::io::ErrorKind::UnexpectedEof =>
            {
                return Ok(())
            }
            Err(e) => return Err(e),
        };
        match header.opcode {
            Opcode::BandwidthUpload => {
                let req: protocol::BandwidthRequest =
                    protocol::parse_json(header.opcode, &payload)?;
                serve_bandwidth_upload(&mut stream, &req)?;
            }
            Opcode::BandwidthDownload => {
                let req: protocol::BandwidthRequest =
                    protocol::parse_json(header.opcode, &payload)?;
                serve_bandwidth_download(&mut stream, &req)?;
            }
            Opcode::EchoRequest => {
                protocol::write_message(
                    &mut stream,
                    Opcode::EchoReply,
                    header.flags,
                    header.seq,
                    &payload,
                )?;
            }
            Opcode::CapacityUpload => {
                let req: protocol::CapacityRequest =
                    protocol::parse_json(header.opcode, &payload)?;
                serve_capacity_upload(&mut stream, &req, &registry)?;
            }
            Opcode::CapacityDownload => {
                let req: protocol::CapacityRequest =
                    protocol::parse_json(header.opcode, &payload)?;
                serve_capacity_download(&mut stream, &req)?;
            }
            other => {
                protocol::write_json(
                    &mut stream,
                    Opcode::Error,
                    0,
                    header.seq,
                    &protocol::ErrorBody {
                        message: format!("unexpected opcode {other:?}"),
                    },
                )?;
                return Ok(());
            }
        }
    }
}

/// Receives `num_packets * packet_size` raw bytes and reports the rate
/// seen between the first and the last payload byte. A zero elapsed time
/// is reported as 0 Mbps; the initiator rejects it.
fn serve_bandwidth_upload(
    stream: &mut TcpStream,
    req: &protocol::BandwidthRequest,
) -> Result<(), ProbeError> {
    protocol::write_message(stream, Opcode::Ok, 0, 0, &[])?;
    let total = req.num_packets as u64 * req.packet_size as u64;
    let mut buf = vec![0u8; STREAM_CHUNK];
    let mut received: u64 = 0;
    let mut first_byte: Option<Instant> = None;
    let mut last_byte = Instant::now();
    while received < total {
        let want = ((total - received) as usize).min(buf.len());
        let n = stream.read(&mut buf[..want])?;
        if n == 0 {
            return Err(ProbeError::Measurement(format!(
                "stream ended early: {received} of {total} bytes"
            )));
        }
        last_byte = Instant::now();
        if first_byte.is_none() {
            first_byte = Some(last_byte);
        }
        received += n as u64;
    }
    let elapsed_us = first_byte
        .map(|t0| last_byte.duration_since(t0).as_micros() as u64)
        .unwrap_or(0);
    let mbps = if elapsed_us == 0 {
        0.0
    } else {
        total as f64 * 8.0 / elapsed_us as f64
    };
    protocol::write_json(
        stream,
        Opcode::BandwidthReport,
        0,
        0,
        &protocol::BandwidthReport {
            elapsed_us,
            bytes: received,
            mbps,
        },
    )
}

fn serve_bandwidth_download(
    stream: &mut TcpStream,
    req: &protocol::BandwidthRequest,
) -> Result<(), ProbeError> {
    protocol::write_message(stream, Opcode::Ok, 0, 0, &[])?;
    let chunk = vec![0u8; req.packet_size as usize];
    for _ in 0..req.num_packets {
        stream.write_all(&chunk)?;
    }
    stream.flush()?;
    Ok(())
}

/// Registers a capacity session token, collects the probe datagrams the
/// UDP loop routes to it, and reports per-pair dispersions measured from
/// local arrival times.
fn serve_capacity_upload(
    stream: &mut TcpStream,
    req: &protocol::CapacityRequest,
    registry: &CapacityRegistry,
) -> Result<(), ProbeError> {
    let (tx, rx) = mpsc::channel();
    let token = {
        let mut registry = registry.lock().unwrap();
        let mut token = (registry.len() as u16).wrapping_add(1).max(1);
        while registry.contains_key(&token) {
            token = token.wrapping_add(1).max(1);
        }
        registry.insert(token, tx);
        token
    };
    protocol::write_json(
        stream,
        Opcode::CapacityReady,
        0,
        0,
        &protocol::CapacityReady { token },
    )?;

    let mut arrivals: Vec<[Option<Instant>; 2]> = vec![[None, None]; req.num_pairs as usize];
    let expected = 2 * req.num_pairs as usize;
    let mut seen = 0usize;
    let mut last_packet = Instant::now();
    while seen < expected {
        match rx.recv_timeout(UDP_POLL) {
            Ok((seq, instant)) => {
                let pair = (seq / 2) as usize;
                let side = (seq % 2) as usize;
                if pair < arrivals.len() && arrivals[pair][side].is_none() {
                    arrivals[pair][side] = Some(instant);
                    seen += 1;
                    last_packet = Instant::now();
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {
                if last_packet.elapsed() > UDP_IDLE_TIMEOUT {
                    break;
                }
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
    }
    registry.lock().unwrap().remove(&token);

    // drain the initiator's completion marker before reporting
    stream.set_read_timeout(Some(UDP_IDLE_TIMEOUT))?;
    let _ = protocol::read_message(stream);
    stream.set_read_timeout(None)?;

    let dispersions = crate::capacity::dispersions_from_arrival_instants(&arrivals);
    let received = arrivals.iter().flatten().flatten().count() as u32;
    protocol::write_json(
        stream,
        Opcode::CapacityReport,
        0,
        0,
        &protocol::CapacityReport {
            dispersions_us: dispersions,
            received_packets: received,
        },
    )
}

/// Collects 2 * num_pairs probe datagrams on a caller-owned socket,
/// stopping early after an idle period. Used by the downstream initiator.
pub(crate) fn receive_capacity_packets(
    udp: &UdpSocket,
    num_pairs: u32,
    packet_size: u32,
) -> Vec<[Option<Instant>; 2]> {
    let mut arrivals: Vec<[Option<Instant>; 2]> = vec![[None, None]; num_pairs as usize];
    let expected = 2 * num_pairs as usize;
    let mut seen = 0usize;
    let mut buf = vec![0u8; (packet_size as usize).max(HEADER_LEN) + 64];
    let _ = udp.set_read_timeout(Some(UDP_POLL));
    let mut last_packet = Instant::now();
    while seen < expected {
        match udp.recv_from(&mut buf) {
            Ok((len, _)) => {
                let now = Instant::now();
                if len < HEADER_LEN {
                    continue;
                }
                let Ok(header) = Header::decode(buf[..HEADER_LEN].try_into().unwrap()) else {
                    continue;
                };
                if header.opcode != Opcode::CapacityPacket {
                    continue;
                }
                let pair = (header.seq / 2) as usize;
                let side = (header.seq % 2) as usize;
                if pair < arrivals.len() && arrivals[pair][side].is_none() {
                    arrivals[pair][side] = Some(now);
                    seen += 1;
                    last_packet = now;
                }
            }
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                if last_packet.elapsed() > UDP_IDLE_TIMEOUT {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    arrivals
}

/// Sends packet pairs back to back towards the initiator's UDP port.
fn serve_capacity_download(
    stream: &mut TcpStream,
    req: &protocol::CapacityRequest,
) -> Result<(), ProbeError> {
    let Some(port) = req.udp_port else {
        protocol::write_json(
            stream,
            Opcode::Error,
            0,
            0,
            &protocol::ErrorBody {
                message: "download request missing udp_port".into(),
            },
        )?;
        return Ok(());
    };
    let target = SocketAddr::new(stream.peer_addr()?.ip(), port);
    protocol::write_message(stream, Opcode::Ok, 0, 0, &[])?;
    let udp = UdpSocket::bind(SocketAddr::new(stream.local_addr()?.ip(), 0))?;
    send_capacity_pairs(&udp, target, req.num_pairs, req.packet_size, 0)?;
    protocol::write_json(
        stream,
        Opcode::CapacitySent,
        0,
        0,
        &protocol::CapacitySent {
            packets: 2 * req.num_pairs,
        },
    )
}

/// Emits each pair as two consecutive sends with no pacing in between;
/// pairs themselves are spaced out so they do not interfere.
pub(crate) fn send_capacity_pairs(
    udp: &UdpSocket,
    target: SocketAddr,
    num_pairs: u32,
    packet_size: u32,
    token: u16,
) -> Result<(), ProbeError> {
    const PAIR_GAP: Duration = Duration::from_millis(10);
    for pair in 0..num_pairs {
        let first =
            protocol::udp_probe_datagram(Opcode::CapacityPacket, token, pair * 2, packet_size);
        let second =
            protocol::udp_probe_datagram(Opcode::CapacityPacket, token, pair * 2 + 1, packet_size);
        udp.send_to(&first, target)?;
        udp.send_to(&second, target)?;
        thread::sleep(PAIR_GAP);
    }
    Ok(())
}
