use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::pcap::{PacketRecord, Transport};

/// Canonical 5-tuple: both directions of a connection map to one key.
/// Endpoint A is the lexicographically smaller (address, port) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub endpoint_a: (Ipv4Addr, u16),
    pub endpoint_b: (Ipv4Addr, u16),
    pub transport: Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    AToB,
    BToA,
}

impl FlowKey {
    pub fn of(packet: &PacketRecord) -> (FlowKey, FlowDirection) {
        let src = (packet.src_addr, packet.src_port);
        let dst = (packet.dst_addr, packet.dst_port);
        if src <= dst {
            (
                FlowKey {
                    endpoint_a: src,
                    endpoint_b: dst,
                    transport: packet.transport,
                },
                FlowDirection::AToB,
            )
        } else {
            (
                FlowKey {
                    endpoint_a: dst,
                    endpoint_b: src,
                    transport: packet.transport,
                },
                FlowDirection::BToA,
            )
        }
    }
}

/// Both directional packet lists of one flow, in capture order.
#[derive(Debug, Clone, Default)]
pub struct FlowRecords {
    pub a_to_b: Vec<PacketRecord>,
    pub b_to_a: Vec<PacketRecord>,
}

impl FlowRecords {
    pub fn direction(&self, direction: FlowDirection) -> &[PacketRecord] {
        match direction {
            FlowDirection::AToB => &self.a_to_b,
            FlowDirection::BToA => &self.b_to_a,
        }
    }

    pub fn total_packets(&self) -> usize {
        self.a_to_b.len() + self.b_to_a.len()
    }
}

/// Packet predicate on address and/or port. A set field matches if it
/// equals either the source or the destination side, so both halves of a
/// connection stay together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowFilter {
    pub host: Option<Ipv4Addr>,
    pub port: Option<u16>,
}

impl FlowFilter {
    pub fn matches(&self, packet: &PacketRecord) -> bool {
        if let Some(host) = self.host {
            if packet.src_addr != host && packet.dst_addr != host {
                return false;
            }
        }
        if let Some(port) = self.port {
            if packet.src_port != port && packet.dst_port != port {
                return false;
            }
        }
        true
    }
}

/// Groups packets into flows, preserving capture order within each
/// direction. Packets failing the filter are dropped.
pub fn extract_flows(
    packets: &[PacketRecord],
    filter: Option<&FlowFilter>,
) -> BTreeMap<FlowKey, FlowRecords> {
    let mut flows: BTreeMap<FlowKey, FlowRecords> = BTreeMap::new();
    for packet in packets {
        if let Some(f) = filter {
            if !f.matches(packet) {
                continue;
            }
        }
        let (key, direction) = FlowKey::of(packet);
        let flow = flows.entry(key).or_default();
        match direction {
            FlowDirection::AToB => flow.a_to_b.push(packet.clone()),
            FlowDirection::BToA => flow.b_to_a.push(packet.clone()),
        }
    }
    flows
}
