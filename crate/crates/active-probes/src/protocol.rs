//! Probe wire protocol.
//!
//! Every message starts with a fixed 16-byte header, big-endian:
//!
//! ```text
//! offset 0  u32  magic          0x4D454350 ("MECP")
//! offset 4  u8   version        1
//! offset 5  u8   opcode
//! offset 6  u16  flags          bit 0: direction (0 upstream, 1 downstream)
//! offset 8  u32  sequence
//! offset 12 u32  payload length (bytes following the header)
//! ```
//!
//! Control payloads are JSON. Bulk stream bytes (bandwidth transfers) are
//! raw and unframed; their length is negotiated in the request. UDP probe
//! datagrams carry the same header, padded with zero bytes up to the
//! configured packet size.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::ProbeError;

pub const MAGIC: u32 = 0x4D45_4350;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
pub const FLAG_DOWNSTREAM: u16 = 0x0001;
/// Control payloads above this size are rejected as protocol violations.
pub const MAX_CONTROL_PAYLOAD: u32 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Ok = 0x01,
    Error = 0x02,
    BandwidthUpload = 0x10,
    BandwidthDownload = 0x11,
    BandwidthReport = 0x12,
    EchoRequest = 0x20,
    EchoReply = 0x21,
    CapacityUpload = 0x30,
    CapacityDownload = 0x31,
    CapacityReady = 0x32,
    CapacitySent = 0x33,
    CapacityReport = 0x34,
    CapacityPacket = 0x38,
}

impl Opcode {
    pub fn from_u8(value: u8) -> Option<Opcode> {
        Some(match value {
            0x01 => Opcode::Ok,
            0x02 => Opcode::Error,
            0x10 => Opcode::BandwidthUpload,
            0x11 => Opcode::BandwidthDownload,
            0x12 => Opcode::BandwidthReport,
            0x20 => Opcode::EchoRequest,
            0x21 => Opcode::EchoReply,
            0x30 => Opcode::CapacityUpload,
            0x31 => Opcode::CapacityDownload,
            0x32 => Opcode::CapacityReady,
            0x33 => Opcode::CapacitySent,
            0x34 => Opcode::CapacityReport,
            0x38 => Opcode::CapacityPacket,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub opcode: Opcode,
    pub flags: u16,
    pub seq: u32,
    pub payload_len: u32,
}

impl Header {
    pub fn new(opcode: Opcode, flags: u16, seq: u32, payload_len: u32) -> Header {
        Header {
            opcode,
            flags,
            seq,
            payload_len,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&MAGIC.to_be_bytes());
        buf[4] = VERSION;
        buf[5] = self.opcode as u8;
        buf[6..8].copy_from_slice(&self.flags.to_be_bytes());
        buf[8..12].copy_from_slice(&self.seq.to_be_bytes());
        buf[12..16].copy_from_slice(&self.payload_len.to_be_bytes());
        buf
    }

    pub fn decode(buf: &[u8; HEADER_LEN]) -> Result<Header, ProbeError> {
        let magic = u32::from_be_bytes(buf[0..4].try_into().unwrap());
        if magic != MAGIC {
            return Err(ProbeError::Handshake(format!(
                "bad magic 0x{magic:08X}, peer is not a probe endpoint"
            )));
        }
        if buf[4] != VERSION {
            return Err(ProbeError::Handshake(format!(
                "unsupported protocol version {}",
                buf[4]
            )));
        }
        let opcode = Opcode::from_u8(buf[5])
            .ok_or_else(|| ProbeError::Handshake(format!("unknown opcode 0x{:02X}", buf[5])))?;
        Ok(Header {
            opcode,
            flags: u16::from_be_bytes(buf[6..8].try_into().unwrap()),
            seq: u32::from_be_bytes(buf[8..12].try_into().unwrap()),
            payload_len: u32::from_be_bytes(buf[12..16].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthRequest {
    pub num_packets: u32,
    pub packet_size: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub elapsed_us: u64,
    pub bytes: u64,
    pub mbps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityRequest {
    pub num_pairs: u32,
    pub packet_size: u32,
    /// For downloads: the UDP port the initiator listens on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udp_port: Option<u16>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReady {
    /// Session token the initiator must place in the flags field of its
    /// capacity probe datagrams.
    pub token: u16,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacitySent {
    pub packets: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReport {
    /// Per-pair receiver-side dispersion in microseconds; `null` marks a
    /// pair with at least one lost packet.
    pub dispersions_us: Vec<Option<i64>>,
    pub received_packets: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub message: String,
}

pub fn write_message(
    stream: &mut impl Write,
    opcode: Opcode,
    flags: u16,
    seq: u32,
    payload: &[u8],
) -> Result<(), ProbeError> {
    let header = Header::new(opcode, flags, seq, payload.len() as u32);
    stream.write_all(&header.encode())?;
    stream.write_all(payload)?;
    stream.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(
    stream: &mut impl Write,
    opcode: Opcode,
    flags: u16,
    seq: u32,
    body: &T,
) -> Result<(), ProbeError> {
    let payload = serde_json::to_vec(body)
        .map_err(|e| ProbeError::Measurement(format!("encode {opcode:?}: {e}")))?;
    write_message(stream, opcode, flags, seq, &payload)
}

pub fn read_message(stream: &mut impl Read) -> Result<(Header, Vec<u8>), ProbeError> {
    let mut buf = [0u8; HEADER_LEN];
    stream.read_exact(&mut buf)?;
    let header = Header::decode(&buf)?;
    if header.payload_len > MAX_CONTROL_PAYLOAD {
        return Err(ProbeError::Handshake(format!(
            "control payload of {} bytes exceeds the limit",
            header.payload_len
        )));
    }
    let mut payload = vec![0u8; header.payload_len as usize];
    stream.read_exact(&mut payload)?;
    Ok((header, payload))
}

/// Reads one message and insists on `expected`. A peer `Error` message is
/// surfaced as [`ProbeError::Peer`], anything else as a handshake error.
pub fn expect_message(
    stream: &mut impl Read,
    expected: Opcode,
) -> Result<(Header, Vec<u8>), ProbeError> {
    let (header, payload) = read_message(stream)?;
    if header.opcode == Opcode::Error {
        let body: ErrorBody = serde_json::from_slice(&payload)
            .unwrap_or(ErrorBody { message: "unknown peer error".into() });
        return Err(ProbeError::Peer(body.message));
    }
    if header.opcode != expected {
        return Err(ProbeError::Handshake(format!(
            "expected {expected:?}, peer sent {:?}",
            header.opcode
        )));
    }
    Ok((header, payload))
}

pub fn parse_json<T: DeserializeOwned>(opcode: Opcode, payload: &[u8]) -> Result<T, ProbeError> {
    serde_json::from_slice(payload)
        .map_err(|e| ProbeError::Handshake(format!("malformed {opcode:?} payload: {e}")))
}

/// Builds a UDP probe datagram: header plus zero padding up to
/// `packet_size` bytes. For capacity packets `flags` carries the session
/// token instead of the direction bit.
pub fn udp_probe_datagram(opcode: Opcode, flags: u16, seq: u32, packet_size: u32) -> Vec<u8> {
    let padding = (packet_size as usize).saturating_sub(HEADER_LEN);
    let header = Header::new(opcode, flags, seq, padding as u32);
    let mut datagram = Vec::with_capacity(packet_size as usize);
    datagram.extend_from_slice(&header.encode());
    datagram.resize(HEADER_LEN + padding, 0);
    datagram
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = Header::new(Opcode::EchoRequest, FLAG_DOWNSTREAM, 7, 123);
        let decoded = Header::decode(&h.encode()).unwrap();
        assert_eq!(h, decoded);
    }

    #[test]
    fn bad_magic_is_handshake_error() {
        let mut buf = Header::new(Opcode::Ok, 0, 0, 0).encode();
        buf[0] = 0xFF;
        assert!(matches!(
            Header::decode(&buf),
            Err(ProbeError::Handshake(_))
        ));
    }

    #[test]
    fn unknown_opcode_rejected() {
        let mut buf = Header::new(Opcode::Ok, 0, 0, 0).encode();
        buf[5] = 0x7F;
        assert!(Header::decode(&buf).is_err());
    }

    #[test]
    fn datagram_is_padded_to_packet_size() {
        let d = udp_probe_datagram(Opcode::CapacityPacket, 9, 3, 1420);
        assert_eq!(d.len(), 1420);
        let header = Header::decode(d[..HEADER_LEN].try_into().unwrap()).unwrap();
        assert_eq!(header.seq, 3);
        assert_eq!(header.flags, 9);
        assert_eq!(header.payload_len as usize, 1420 - HEADER_LEN);
    }

    #[test]
    fn message_round_trip_over_buffer() {
        let mut buf = Vec::new();
        write_json(
            &mut buf,
            Opcode::BandwidthUpload,
            0,
            1,
            &BandwidthRequest {
                num_packets: 4,
                packet_size: 100,
            },
        )
        .unwrap();
        let (header, payload) = read_message(&mut buf.as_slice()).unwrap();
        assert_eq!(header.opcode, Opcode::BandwidthUpload);
        let req: BandwidthRequest = parse_json(header.opcode, &payload).unwrap();
        assert_eq!(req.num_packets, 4);
    }
}
