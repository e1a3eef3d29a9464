use std::net::Ipv4Addr;

use crate::error::AnalyzerError;

/// Classic pcap magic, microsecond timestamps.
pub(crate) const MAGIC_US: u32 = 0xA1B2_C3D4;
/// Classic pcap magic, nanosecond timestamps.
pub(crate) const MAGIC_NS: u32 = 0xA1B2_3C4D;
/// First 4 bytes of a pcapng section header block.
const PCAPNG_BLOCK: u32 = 0x0A0D_0D0A;

pub const TCP_SYN: u8 = 0x02;
pub const TCP_ACK: u8 = 0x10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transport {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpInfo {
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
}

/// One decoded packet. `payload_len` counts transport payload bytes only,
/// all headers excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp_us: i64,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    pub payload_len: u32,
    pub tcp: Option<TcpInfo>,
}

/// Parse result: decoded packets plus the number of skipped ones.
#[derive(Debug, Clone, Default)]
pub struct CaptureData {
    pub packets: Vec<PacketRecord>,
    pub skipped: u32,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Some(slice)
    }
}

fn read_u32(bytes: &[u8], swapped: bool) -> u32 {
    let arr: [u8; 4] = bytes.try_into().unwrap();
    if swapped {
        u32::from_be_bytes(arr)
    } else {
        u32::from_le_bytes(arr)
    }
}

/// Decodes a classic pcap byte stream. Unparsable packets (truncated
/// frames, non-IPv4, non-TCP/UDP) are skipped and counted; a bad global
/// header is a hard error.
pub fn parse_capture(input: &[u8]) -> Result<CaptureData, AnalyzerError> {
    let mut cur = Cursor { data: input, pos: 0 };
    let header = cur
        .take(24)
        .ok_or(AnalyzerError::Truncated("global header"))?;
    let magic_le = u32::from_le_bytes(header[0..4].try_into().unwrap());
    let magic_be = u32::from_be_bytes(header[0..4].try_into().unwrap());
    if magic_le == PCAPNG_BLOCK || magic_be == PCAPNG_BLOCK {
        return Err(AnalyzerError::PcapNg);
    }
    // `swapped` means the writer's byte order is opposite to little-endian
    // reads; nanos means the fractional field counts nanoseconds.
    let (swapped, nanos) = match (magic_le, magic_be) {
        (MAGIC_US, _) => (false, false),
        (MAGIC_NS, _) => (false, true),
        (_, MAGIC_US) => (true, false),
        (_, MAGIC_NS) => (true, true),
        _ => return Err(AnalyzerError::BadMagic(magic_le)),
    };
    let link_type = read_u32(&header[20..24], swapped);
    if link_type != 1 {
        return Err(AnalyzerError::UnsupportedLinkType(link_type));
    }

    let mut out = CaptureData::default();
    loop {
        if cur.remaining() == 0 {
            break;
        }
        let Some(rec_header) = cur.take(16) else {
            out.skipped += 1;
            break;
        };
        let ts_sec = read_u32(&rec_header[0..4], swapped) as i64;
        let ts_frac = read_u32(&rec_header[4..8], swapped) as i64;
        let incl_len = read_u32(&rec_header[8..12], swapped) as usize;
        let timestamp_us = ts_sec * 1_000_000 + if nanos { ts_frac / 1_000 } else { ts_frac };
        let Some(frame) = cur.take(incl_len) else {
            out.skipped += 1;
            break;
        };
        match decode_frame(timestamp_us, frame) {
            Some(record) => out.packets.push(record),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

fn decode_frame(timestamp_us: i64, frame: &[u8]) -> Option<PacketRecord> {
    // Ethernet II
    if frame.len() < 14 {
        return None;
    }
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    if ethertype != 0x0800 {
        return None;
    }
    let ip = &frame[14..];
    if ip.len() < 20 {
        return None;
    }
    if ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = ((ip[0] & 0x0F) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return None;
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    if total_len < ihl || ip.len() < total_len {
        return None;
    }
    let protocol = ip[9];
    let src_addr = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_addr = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let transport_bytes = &ip[ihl..total_len];
    match protocol {
        6 => {
            if transport_bytes.len() < 20 {
                return None;
            }
            let data_offset = ((transport_bytes[12] >> 4) as usize) * 4;
            if data_offset < 20 || transport_bytes.len() < data_offset {
                return None;
            }
            Some(PacketRecord {
                timestamp_us,
                src_addr,
                dst_addr,
                src_port: u16::from_be_bytes([transport_bytes[0], transport_bytes[1]]),
                dst_port: u16::from_be_bytes([transport_bytes[2], transport_bytes[3]]),
                transport: Transport::Tcp,
                payload_len: (transport_bytes.len() - data_offset) as u32,
                tcp: Some(TcpInfo {
                    seq: u32::from_be_bytes(transport_bytes[4..8].try_into().unwrap()),
                    ack: u32::from_be_bytes(transport_bytes[8..12].try_into().unwrap()),
                    flags: transport_bytes[13],
                }),
            })
        }
        17 => {
            if transport_bytes.len() < 8 {
                return None;
            }
            let udp_len = u16::from_be_bytes([transport_bytes[4], transport_bytes[5]]) as usize;
            if udp_len < 8 || transport_bytes.len() < udp_len {
                return None;
            }
            Some(PacketRecord {
                timestamp_us,
                src_addr,
                dst_addr,
                src_port: u16::from_be_bytes([transport_bytes[0], transport_bytes[1]]),
                dst_port: u16::from_be_bytes([transport_bytes[2], transport_bytes[3]]),
                transport: Transport::Udp,
                payload_len: (udp_len - 8) as u32,
                tcp: None,
            })
        }
        _ => None,
    }
}
