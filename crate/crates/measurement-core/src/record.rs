use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Canonical unit for bandwidth, capacity and throughput values.
pub const UNIT_MBPS: &str = "Mbps";
/// Canonical unit for latency values.
pub const UNIT_MS: &str = "ms";

/// How a sample was collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Active,
    Passive,
    #[serde(rename = "self")]
    SelfReported,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Active => "active",
            Method::Passive => "passive",
            Method::SelfReported => "self",
        })
    }
}

impl FromStr for Method {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "active" => Ok(Method::Active),
            "passive" => Ok(Method::Passive),
            "self" => Ok(Method::SelfReported),
            other => Err(DomainError::invalid(
                "method",
                format!("unknown method `{other}` (expected active|passive|self)"),
            )),
        }
    }
}

/// Network path portion a sample refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentId {
    AccessMec,
    MecCloud,
    AccessCloud,
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentId::AccessMec => "access_mec",
            SegmentId::MecCloud => "mec_cloud",
            SegmentId::AccessCloud => "access_cloud",
        })
    }
}

impl FromStr for SegmentId {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "access_mec" => Ok(SegmentId::AccessMec),
            "mec_cloud" => Ok(SegmentId::MecCloud),
            "access_cloud" => Ok(SegmentId::AccessCloud),
            other => Err(DomainError::invalid(
                "segment",
                format!("unknown segment `{other}` (expected access_mec|mec_cloud|access_cloud)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upstream,
    Downstream,
}

impl Direction {
    pub fn flipped(self) -> Direction {
        match self {
            Direction::Upstream => Direction::Downstream,
            Direction::Downstream => Direction::Upstream,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Upstream => "upstream",
            Direction::Downstream => "downstream",
        })
    }
}

impl FromStr for Direction {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upstream" => Ok(Direction::Upstream),
            "downstream" => Ok(Direction::Downstream),
            other => Err(DomainError::invalid(
                "direction",
                format!("unknown direction `{other}` (expected upstream|downstream)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessTechnology {
    Wifi,
    Lte,
}

impl fmt::Display for AccessTechnology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessTechnology::Wifi => "wifi",
            AccessTechnology::Lte => "lte",
        })
    }
}

impl FromStr for AccessTechnology {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wifi" => Ok(AccessTechnology::Wifi),
            "lte" => Ok(AccessTechnology::Lte),
            other => Err(DomainError::invalid(
                "access_technology",
                format!("unknown access technology `{other}` (expected wifi|lte)"),
            )),
        }
    }
}

/// What a measurement value means.
///
/// Unit variants serialize as plain strings (`"tcp_bandwidth"`), the
/// self-reported variant as `{"self_metric": "<label>"}`. There is no
/// UDP passive-latency variant: ACK-based latency only exists for TCP.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    TcpBandwidth,
    UdpCapacity,
    TcpLatency,
    UdpLatency,
    PassiveThroughput,
    PassiveLatency,
    SelfMetric(String),
}

impl MetricKind {
    /// Canonical unit, or `None` for application-defined self metrics.
    pub fn canonical_unit(&self) -> Option<&'static str> {
        match self {
            MetricKind::TcpBandwidth | MetricKind::UdpCapacity | MetricKind::PassiveThroughput => {
                Some(UNIT_MBPS)
            }
            MetricKind::TcpLatency | MetricKind::UdpLatency | MetricKind::PassiveLatency => {
                Some(UNIT_MS)
            }
            MetricKind::SelfMetric(_) => None,
        }
    }

    /// The collection method this kind belongs to.
    pub fn method(&self) -> Method {
        match self {
            MetricKind::TcpBandwidth
            | MetricKind::UdpCapacity
            | MetricKind::TcpLatency
            | MetricKind::UdpLatency => Method::Active,
            MetricKind::PassiveThroughput | MetricKind::PassiveLatency => Method::Passive,
            MetricKind::SelfMetric(_) => Method::SelfReported,
        }
    }

    pub fn is_latency(&self) -> bool {
        matches!(
            self,
            MetricKind::TcpLatency | MetricKind::UdpLatency | MetricKind::PassiveLatency
        )
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if let MetricKind::SelfMetric(label) = self {
            if label.is_empty() {
                return Err(DomainError::invalid(
                    "metric",
                    "self_metric label must be non-empty",
                ));
            }
        }
        Ok(())
    }

    /// Parses the CLI / query-parameter spelling. Self metrics are spelled
    /// `self_metric:<label>`.
    pub fn parse(kind: &str, label: Option<&str>) -> Result<MetricKind, DomainError> {
        match kind {
            "tcp_bandwidth" => Ok(MetricKind::TcpBandwidth),
            "udp_capacity" => Ok(MetricKind::UdpCapacity),
            "tcp_latency" => Ok(MetricKind::TcpLatency),
            "udp_latency" => Ok(MetricKind::UdpLatency),
            "passive_throughput" => Ok(MetricKind::PassiveThroughput),
            "passive_latency" => Ok(MetricKind::PassiveLatency),
            "self_metric" => {
                let label = label.unwrap_or("");
                let kind = MetricKind::SelfMetric(label.to_string());
                kind.validate()?;
                Ok(kind)
            }
            other => Err(DomainError::invalid(
                "metric",
                format!("unknown metric `{other}`"),
            )),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::TcpBandwidth => f.write_str("tcp_bandwidth"),
            MetricKind::UdpCapacity => f.write_str("udp_capacity"),
            MetricKind::TcpLatency => f.write_str("tcp_latency"),
            MetricKind::UdpLatency => f.write_str("udp_latency"),
            MetricKind::PassiveThroughput => f.write_str("passive_throughput"),
            MetricKind::PassiveLatency => f.write_str("passive_latency"),
            MetricKind::SelfMetric(label) => write!(f, "self_metric:{label}"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((kind, label)) => MetricKind::parse(kind, Some(label)),
            None => MetricKind::parse(s, None),
        }
    }
}

/// The full experiment setup a sample was collected under. Used both to
/// tag stored records and, in partial form, to select traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDescriptor {
    pub method: Method,
    pub metric: MetricKind,
    pub segment: SegmentId,
    pub direction: Direction,
    pub access_technology: AccessTechnology,
    pub cross_traffic_mbps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_clients: Option<u32>,
}

impl TraceDescriptor {
    pub fn validate(&self) -> Result<(), DomainError> {
        self.metric.validate()?;
        if self.metric.method() != self.method {
            return Err(DomainError::invalid(
                "metric",
                format!(
                    "metric `{}` is a {} metric but method is `{}`",
                    self.metric,
                    self.metric.method(),
                    self.method
                ),
            ));
        }
        if !self.cross_traffic_mbps.is_finite() || self.cross_traffic_mbps < 0.0 {
            return Err(DomainError::invalid(
                "cross_traffic_mbps",
                "must be finite and non-negative",
            ));
        }
        match self.num_clients {
            Some(0) => {
                return Err(DomainError::invalid("num_clients", "must be positive"));
            }
            Some(_) if self.method == Method::Active => {
                return Err(DomainError::invalid(
                    "num_clients",
                    "must be absent for active measurements",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// One KPI sample plus the metadata needed to retrieve it later.
///
/// `timestamp_us` is wall-clock microseconds since the Unix epoch.
/// Encoding a record to JSON and decoding it back is bit-exact on all
/// fields (integers round-trip trivially, floats via shortest-repr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub id: String,
    pub run_id: String,
    pub timestamp_us: i64,
    pub value: f64,
    pub unit: String,
    pub descriptor: TraceDescriptor,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.id.is_empty() {
            return Err(DomainError::invalid("id", "must be non-empty"));
        }
        if self.run_id.is_empty() {
            return Err(DomainError::invalid("run_id", "must be non-empty"));
        }
        if !self.value.is_finite() || self.value < 0.0 {
            return Err(DomainError::invalid(
                "value",
                "must be finite and non-negative",
            ));
        }
        if let Some(unit) = self.descriptor.metric.canonical_unit() {
            if self.unit != unit {
                return Err(DomainError::invalid(
                    "unit",
                    format!(
                        "metric `{}` stores `{unit}`, got `{}`",
                        self.descriptor.metric, self.unit
                    ),
                ));
            }
        } else if self.unit.is_empty() {
            return Err(DomainError::invalid("unit", "must be non-empty"));
        }
        self.descriptor.validate()
    }
}

/// A batch of records as submitted to the aggregator. All records in a
/// batch share a single descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordBatch {
    pub source: Method,
    pub submitter: String,
    pub records: Vec<MeasurementRecord>,
}

impl RecordBatch {
    pub fn validate(&self) -> Result<(), DomainError> {
        let first = self.records.first().ok_or(DomainError::EmptyBatch)?;
        for (index, record) in self.records.iter().enumerate() {
            record.validate()?;
            if record.descriptor != first.descriptor {
                return Err(DomainError::MixedDescriptors { index });
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> Option<&TraceDescriptor> {
        self.records.first().map(|r| &r.descriptor)
    }
}

/// Current wall-clock time in microseconds since the Unix epoch.
pub fn now_timestamp_us() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as i64)
        .unwrap_or(0)
}
