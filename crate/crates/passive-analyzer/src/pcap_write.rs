//! Synthetic classic-pcap writer for tests and fixtures. Checksums are
//! left zero; the parser does not verify them.

use std::net::SocketAddrV4;

use crate::pcap::{MAGIC_NS, MAGIC_US};

pub struct CaptureWriter {
    bytes: Vec<u8>,
    swapped: bool,
    nanos: bool,
}

impl Default for CaptureWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl CaptureWriter {
    /// Little-endian, microsecond timestamps.
    pub fn new() -> CaptureWriter {
        CaptureWriter::with_options(false, false)
    }

    /// Opposite byte order; exercises the parser's endianness handling.
    pub fn new_swapped() -> CaptureWriter {
        CaptureWriter::with_options(true, false)
    }

    /// Nanosecond-timestamp variant.
    pub fn new_nanos() -> CaptureWriter {
        CaptureWriter::with_options(false, true)
    }

    fn with_options(swapped: bool, nanos: bool) -> CaptureWriter {
        let mut writer = CaptureWriter {
            bytes: Vec::new(),
            swapped,
            nanos,
        };
        let magic = if nanos { MAGIC_NS } else { MAGIC_US };
        writer.put_u32(magic);
        writer.put_u16(2); // version major
        writer.put_u16(4); // version minor
        writer.put_u32(0); // thiszone
        writer.put_u32(0); // sigfigs
        writer.put_u32(65535); // snaplen
        writer.put_u32(1); // linktype: Ethernet
        writer
    }

    fn put_u16(&mut self, v: u16) {
        let b = if self.swapped {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        };
        self.bytes.extend_from_slice(&b);
    }

    fn put_u32(&mut self, v: u32) {
        let b = if self.swapped {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        };
        self.bytes.extend_from_slice(&b);
    }

    /// Appends a raw Ethernet frame with the given capture timestamp.
    pub fn push_raw_frame(&mut self, timestamp_us: i64, frame: &[u8]) {
        let ts_sec = (timestamp_us / 1_000_000) as u32;
        let frac_us = (timestamp_us % 1_000_000) as u32;
        let frac = if self.nanos { frac_us * 1_000 } else { frac_us };
        self.put_u32(ts_sec);
        self.put_u32(frac);
        self.put_u32(frame.len() as u32);
        self.put_u32(frame.len() as u32);
        self.bytes.extend_from_slice(frame);
    }

    /// Appends a TCP segment with `payload_len` zero bytes of payload.
    #[allow(clippy::too_many_arguments)]
    pub fn push_tcp(
        &mut self,
        timestamp_us: i64,
        src: SocketAddrV4,
        dst: SocketAddrV4,
        seq: u32,
        ack: u32,
        flags: u8,
        payload_len: u32,
    ) {
        let mut tcp = Vec::with_capacity(20 + payload_len as usize);
        tcp.extend_from_slice(&src.port().to_be_bytes());
        tcp.extend_from_slice(&dst.port().to_be_bytes());
        tcp.extend_from_slice(&seq.to_be_bytes());
        tcp.extend_from_slice(&ack.to_be_bytes());
        tcp.push(5 << 4); // data offset: 5 words
        tcp.push(flags);
        tcp.extend_from_slice(&0u16.to_be_bytes()); // window
        tcp.extend_from_slice(&0u32.to_be_bytes()); // checksum + urgent
        tcp.resize(20 + payload_len as usize, 0);
        self.push_ipv4(timestamp_us, src, dst, 6, &tcp);
    }

    /// Appends a UDP datagram with `payload_len` zero bytes of payload.
    pub fn push_udp(
        &mut self,
        timestamp_us: i64,
        src: SocketAddrV4,
        dst: SocketAddrV4,
        payload_len: u32,
    ) {
        let udp_len = 8 + payload_len as usize;
        let mut udp = Vec::with_capacity(udp_len);
        udp.extend_from_slice(&src.port().to_be_bytes());
        udp.extend_from_slice(&dst.port().to_be_bytes());
        udp.extend_from_slice(&(udp_len as u16).to_be_bytes());
        udp.extend_from_slice(&0u16.to_be_bytes()); // checksum
        udp.resize(udp_len, 0);
        self.push_ipv4(timestamp_us, src, dst, 17, &udp);
    }

    fn push_ipv4(
        &mut self,
        timestamp_us: i64,
        src: SocketAddrV4,
        dst: SocketAddrV4,
        protocol: u8,
        transport: &[u8],
    ) {
        let total_len = 20 + transport.len();
        let mut frame = Vec::with_capacity(14 + total_len);
        frame.extend_from_slice(&[0u8; 12]); // MAC addresses
        frame.extend_from_slice(&0x0800u16.to_be_bytes());
        frame.push(0x45); // version 4, IHL 5
        frame.push(0);
        frame.extend_from_slice(&(total_len as u16).to_be_bytes());
        frame.extend_from_slice(&[0u8; 4]); // id + flags/frag
        frame.push(64); // TTL
        frame.push(protocol);
        frame.extend_from_slice(&0u16.to_be_bytes()); // checksum
        frame.extend_from_slice(&src.ip().octets());
        frame.extend_from_slice(&dst.ip().octets());
        frame.extend_from_slice(transport);
        self.push_raw_frame(timestamp_us, &frame);
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}
