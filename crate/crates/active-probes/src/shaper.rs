//! In-process path shaping for tests and validation: a TCP proxy with
//! token-bucket rate limiting and injected delay, and a UDP proxy with
//! the same knobs plus selective packet drops. Probes aimed at the proxy
//! port behave as if the path to the real responder were rate-limited
//! and/or slower.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::debug;

use crate::protocol::{Header, Opcode, HEADER_LEN};

const PUMP_CHUNK: usize = 4096;
const POLL: Duration = Duration::from_millis(100);

/// Sleeps until `deadline` with sub-millisecond accuracy: a coarse sleep
/// followed by a short spin.
pub fn sleep_until_precise(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let remaining = deadline - now;
        if remaining > Duration::from_micros(800) {
            thread::sleep(remaining - Duration::from_micros(500));
        } else {
            while Instant::now() < deadline {
                std::hint::spin_loop();
            }
            return;
        }
    }
}

/// A byte-granularity token bucket. `take` blocks until the requested
/// bytes are available; debt from undersleeping carries over, so the
/// long-run rate converges to the configured one.
pub struct TokenBucket {
    bytes_per_sec: f64,
    burst: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn from_mbps(rate_mbps: f64, burst_bytes: usize) -> TokenBucket {
        TokenBucket {
            bytes_per_sec: rate_mbps * 1e6 / 8.0,
            burst: burst_bytes as f64,
            tokens: burst_bytes as f64,
            last: Instant::now(),
        }
    }

    fn refill(&mut self) {
        let now = Instant::now();
        self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.bytes_per_sec)
            .min(self.burst);
        self.last = now;
    }

    pub fn take(&mut self, bytes: usize) {
        self.refill();
        if self.tokens < bytes as f64 {
            let deficit = bytes as f64 - self.tokens;
            let wait = Duration::from_secs_f64(deficit / self.bytes_per_sec);
            sleep_until_precise(Instant::now() + wait);
            self.refill();
        }
        self.tokens -= bytes as f64;
    }
}

/// Shaping parameters for one proxied path. `rtt_delay` is the total
/// added round-trip delay, applied as half in each direction.
#[derive(Debug, Clone, Default)]
pub struct ShaperConfig {
    pub rate_mbps: Option<f64>,
    pub rtt_delay: Duration,
    pub burst_bytes: Option<usize>,
}

impl ShaperConfig {
    pub fn rate(rate_mbps: f64) -> ShaperConfig {
        ShaperConfig {
            rate_mbps: Some(rate_mbps),
            ..Default::default()
        }
    }

    pub fn delay(rtt_delay: Duration) -> ShaperConfig {
        ShaperConfig {
            rtt_delay,
            ..Default::default()
        }
    }

    fn burst(&self) -> usize {
        self.burst_bytes.unwrap_or(16 * 1024)
    }
}

pub struct ShaperHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ShaperHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
    }
}

impl Drop for ShaperHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// TCP proxy applying `config` to both directions independently.
pub struct TcpShaper;

impl TcpShaper {
    pub fn spawn(target: SocketAddr, config: ShaperConfig) -> std::io::Result<ShaperHandle> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let accept_stop = Arc::clone(&stop);
        thread::Builder::new().name("tcp-shaper".into()).spawn(move || {
            for stream in listener.incoming() {
                if accept_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(client) = stream else { continue };
                let config = config.clone();
                let _ = thread::Builder::new().name("tcp-shaper-conn".into()).spawn(move || {
                    if let Err(e) = proxy_connection(client, target, &config) {
                        debug!("shaper connection ended: {e}");
                    }
                });
            }
        })?;
        Ok(ShaperHandle { addr, stop })
    }
}

fn proxy_connection(
    client: TcpStream,
    target: SocketAddr,
    config: &ShaperConfig,
) -> std::io::Result<()> {
    client.set_nodelay(true)?;
    let server = TcpStream::connect_timeout(&target, Duration::from_secs(5))?;
    server.set_nodelay(true)?;
    let c2s = (client.try_clone()?, server.try_clone()?);
    let s2c = (server, client);
    let cfg_up = config.clone();
    let cfg_down = config.clone();
    let up = thread::Builder::new()
        .name("shaper-up".into())
        .spawn(move || pump(c2s.0, c2s.1, &cfg_up))?;
    pump(s2c.0, s2c.1, &cfg_down);
    let _ = up.join();
    Ok(())
}

fn pump(mut src: TcpStream, mut dst: TcpStream, config: &ShaperConfig) {
    let mut bucket = config
        .rate_mbps
        .map(|rate| TokenBucket::from_mbps(rate, config.burst()));
    let one_way = config.rtt_delay / 2;
    let mut buf = [0u8; PUMP_CHUNK];
    loop {
        let n = match src.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        let release = Instant::now() + one_way;
        if let Some(bucket) = bucket.as_mut() {
            bucket.take(n);
        }
        if !one_way.is_zero() {
            sleep_until_precise(release);
        }
        if dst.write_all(&buf[..n]).is_err() {
            break;
        }
    }
    let _ = dst.shutdown(Shutdown::Write);
    let _ = src.shutdown(Shutdown::Read);
}

/// UDP proxy: forwards datagrams between one client and a fixed target,
/// with optional rate limiting, symmetric one-way delay, and selective
/// drops of client-to-target probe datagrams by sequence number. TCP
/// connections to the same port are forwarded unshaped, so probe control
/// channels work through the proxy address transparently.
#[derive(Debug, Clone, Default)]
pub struct UdpProxyConfig {
    pub rate_mbps: Option<f64>,
    pub delay_each_way: Duration,
    pub drop_client_seqs: HashSet<u32>,
    pub burst_bytes: Option<usize>,
}

pub struct UdpProxyHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl UdpProxyHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
    }
}

impl Drop for UdpProxyHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

pub struct UdpProxy;

impl UdpProxy {
    pub fn spawn(target: SocketAddr, config: UdpProxyConfig) -> std::io::Result<UdpProxyHandle> {
        let (tcp_listener, client_sock) =
            crate::responder::bind_pair("127.0.0.1:0".parse().unwrap())?;
        let server_sock = UdpSocket::bind("127.0.0.1:0")?;
        let addr = client_sock.local_addr()?;
        client_sock.set_read_timeout(Some(POLL))?;
        server_sock.set_read_timeout(Some(POLL))?;
        let stop = Arc::new(AtomicBool::new(false));
        let client_addr: Arc<Mutex<Option<SocketAddr>>> = Arc::new(Mutex::new(None));

        {
            let stop = Arc::clone(&stop);
            thread::Builder::new().name("udp-shaper-tcp".into()).spawn(move || {
                for stream in tcp_listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(client) = stream else { continue };
                    let _ = thread::Builder::new().name("udp-shaper-tcp-conn".into()).spawn(
                        move || {
                            let _ = proxy_connection(client, target, &ShaperConfig::default());
                        },
                    );
                }
            })?;
        }

        {
            let (client_sock, server_sock) = (client_sock.try_clone()?, server_sock.try_clone()?);
            let (stop, client_addr, config) =
                (Arc::clone(&stop), Arc::clone(&client_addr), config.clone());
            thread::Builder::new().name("udp-shaper-c2s".into()).spawn(move || {
                let mut bucket = config
                    .rate_mbps
                    .map(|rate| TokenBucket::from_mbps(rate, config.burst_bytes.unwrap_or(2048)));
                let mut buf = vec![0u8; 65536];
                while !stop.load(Ordering::SeqCst) {
                    let Ok((len, src)) = client_sock.recv_from(&mut buf) else { continue };
                    *client_addr.lock().unwrap() = Some(src);
                    if len >= HEADER_LEN {
                        if let Ok(header) = Header::decode(buf[..HEADER_LEN].try_into().unwrap()) {
                            if matches!(header.opcode, Opcode::EchoRequest | Opcode::CapacityPacket)
                                && config.drop_client_seqs.contains(&header.seq)
                            {
                                continue;
                            }
                        }
                    }
                    if let Some(bucket) = bucket.as_mut() {
                        bucket.take(len);
                    }
                    if !config.delay_each_way.is_zero() {
                        sleep_until_precise(Instant::now() + config.delay_each_way);
                    }
                    let _ = server_sock.send_to(&buf[..len], target);
                }
            })?;
        }
        {
            let stop = Arc::clone(&stop);
            let config = config.clone();
            thread::Builder::new().name("udp-shaper-s2c".into()).spawn(move || {
                let mut buf = vec![0u8; 65536];
                while !stop.load(Ordering::SeqCst) {
                    let Ok((len, _)) = server_sock.recv_from(&mut buf) else { continue };
                    if !config.delay_each_way.is_zero() {
                        sleep_until_precise(Instant::now() + config.delay_each_way);
                    }
                    let back = *client_addr.lock().unwrap();
                    if let Some(addr) = back {
                        let _ = client_sock.send_to(&buf[..len], addr);
                    }
                }
            })?;
        }
        Ok(UdpProxyHandle { addr, stop })
    }
}
