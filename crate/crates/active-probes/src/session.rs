use std::net::SocketAddr;
use std::time::Duration;

use measurement_core::{
    AccessTechnology, Direction, MetricKind, SegmentId, TraceDescriptor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeRole {
    Client,
    Observer,
    RemoteServer,
}

/// One initiator-side probe session: a peer endpoint, a transport and the
/// network segment the pair spans. `timeout` bounds every blocking socket
/// wait (UDP probe replies in particular); default 2 s.
#[derive(Debug, Clone)]
pub struct ProbeSession {
    pub local_role: ProbeRole,
    pub peer: SocketAddr,
    pub transport: Transport,
    pub segment: SegmentId,
    pub timeout: Duration,
}

impl ProbeSession {
    pub fn new(
        local_role: ProbeRole,
        peer: SocketAddr,
        transport: Transport,
        segment: SegmentId,
    ) -> ProbeSession {
        ProbeSession {
            local_role,
            peer,
            transport,
            segment,
            timeout: Duration::from_secs(2),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> ProbeSession {
        self.timeout = timeout;
        self
    }
}

/// Experiment metadata stamped onto the records a probe produces.
#[derive(Debug, Clone)]
pub struct ProbeContext {
    pub direction: Direction,
    pub access_technology: AccessTechnology,
    pub cross_traffic_mbps: f64,
    /// Run id shared by all records of one probe invocation. Generated
    /// from the clock when absent.
    pub run_id: Option<String>,
}

impl ProbeContext {
    pub fn new(direction: Direction, access_technology: AccessTechnology) -> ProbeContext {
        ProbeContext {
            direction,
            access_technology,
            cross_traffic_mbps: 0.0,
            run_id: None,
        }
    }

    pub fn descriptor(&self, session: &ProbeSession, metric: MetricKind) -> TraceDescriptor {
        TraceDescriptor {
            method: measurement_core::Method::Active,
            metric,
            segment: session.segment,
            direction: self.direction,
            access_technology: self.access_technology,
            cross_traffic_mbps: self.cross_traffic_mbps,
            num_clients: None,
        }
    }

    pub(crate) fn run_id_or_generated(&self, kind: &str) -> String {
        match &self.run_id {
            Some(id) => id.clone(),
            None => format!("{kind}-{}", measurement_core::now_timestamp_us()),
        }
    }
}
