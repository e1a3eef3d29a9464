use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::record::{
    AccessTechnology, Direction, MeasurementRecord, Method, MetricKind, SegmentId, TraceDescriptor,
};

/// A partial descriptor. Unset fields are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescriptorQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<SegmentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access_technology: Option<AccessTechnology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_traffic_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_clients: Option<u32>,
}

impl DescriptorQuery {
    pub fn matches(&self, descriptor: &TraceDescriptor) -> bool {
        descriptor_matches(descriptor, self)
    }

    /// A query with every field of `descriptor` set.
    pub fn from_descriptor(descriptor: &TraceDescriptor) -> DescriptorQuery {
        DescriptorQuery {
            method: Some(descriptor.method),
            metric: Some(descriptor.metric.clone()),
            segment: Some(descriptor.segment),
            direction: Some(descriptor.direction),
            access_technology: Some(descriptor.access_technology),
            cross_traffic_mbps: Some(descriptor.cross_traffic_mbps),
            num_clients: descriptor.num_clients,
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == DescriptorQuery::default()
    }

    /// How many set fields agree with `descriptor`. Used to rank nearest
    /// descriptors in not-found diagnostics.
    pub fn agreement(&self, descriptor: &TraceDescriptor) -> usize {
        let mut n = 0;
        if self.method == Some(descriptor.method) {
            n += 1;
        }
        if self.metric.as_ref() == Some(&descriptor.metric) {
            n += 1;
        }
        if self.segment == Some(descriptor.segment) {
            n += 1;
        }
        if self.direction == Some(descriptor.direction) {
            n += 1;
        }
        if self.access_technology == Some(descriptor.access_technology) {
            n += 1;
        }
        if self.cross_traffic_mbps == Some(descriptor.cross_traffic_mbps) {
            n += 1;
        }
        if self.num_clients.is_some() && self.num_clients == descriptor.num_clients {
            n += 1;
        }
        n
    }
}

/// True iff every set field of `query` equals the corresponding field of
/// `descriptor`. Total: never fails, the empty query matches everything.
pub fn descriptor_matches(descriptor: &TraceDescriptor, query: &DescriptorQuery) -> bool {
    if let Some(method) = query.method {
        if descriptor.method != method {
            return false;
        }
    }
    if let Some(metric) = &query.metric {
        if &descriptor.metric != metric {
            return false;
        }
    }
    if let Some(segment) = query.segment {
        if descriptor.segment != segment {
            return false;
        }
    }
    if let Some(direction) = query.direction {
        if descriptor.direction != direction {
            return false;
        }
    }
    if let Some(tech) = query.access_technology {
        if descriptor.access_technology != tech {
            return false;
        }
    }
    if let Some(cross) = query.cross_traffic_mbps {
        if descriptor.cross_traffic_mbps != cross {
            return false;
        }
    }
    if let Some(clients) = query.num_clients {
        if descriptor.num_clients != Some(clients) {
            return false;
        }
    }
    true
}

/// Record selection: descriptor wildcard match plus optional time range
/// and run id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordQuery {
    #[serde(flatten)]
    pub descriptor: DescriptorQuery,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_us: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_us: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl RecordQuery {
    pub fn validate(&self) -> Result<(), DomainError> {
        if let (Some(from), Some(to)) = (self.from_us, self.to_us) {
            if from > to {
                return Err(DomainError::invalid("from_us", "time range start > end"));
            }
        }
        Ok(())
    }

    /// The time range is inclusive on both ends.
    pub fn matches(&self, record: &MeasurementRecord) -> bool {
        if !self.descriptor.matches(&record.descriptor) {
            return false;
        }
        if let Some(from) = self.from_us {
            if record.timestamp_us < from {
                return false;
            }
        }
        if let Some(to) = self.to_us {
            if record.timestamp_us > to {
                return false;
            }
        }
        if let Some(run_id) = &self.run_id {
            if &record.run_id != run_id {
                return false;
            }
        }
        true
    }
}
