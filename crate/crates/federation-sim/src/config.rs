use measurement_core::DescriptorQuery;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Full parameter set for one simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_clients: u32,
    /// Mean of the exponential active/inactive period lengths, in slots.
    pub mean_period_slots: f64,
    /// Fraction of each operator's subscribed clients migrated per slot.
    pub gamma: f64,
    pub num_slots: u32,
    pub num_replications: u32,
    pub seed: u64,
    /// Trace selection for a client's operator-1 network.
    pub trace_query_op1: DescriptorQuery,
    /// Trace selection for a client's operator-2 network.
    pub trace_query_op2: DescriptorQuery,
    pub quantiles: Vec<f64>,
    /// Maps slot indices to trace timestamps.
    pub seconds_per_slot: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            num_clients: 100,
            mean_period_slots: 10.0,
            gamma: 0.0,
            num_slots: 200,
            num_replications: 20,
            seed: 0,
            trace_query_op1: DescriptorQuery::default(),
            trace_query_op2: DescriptorQuery::default(),
            quantiles: vec![0.5, 0.75, 0.95],
            seconds_per_slot: 1.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_clients == 0 {
            return Err(SimError::Config("num_clients must be positive".into()));
        }
        if !(self.mean_period_slots > 0.0) {
            return Err(SimError::Config("mean_period_slots must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(SimError::Config(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.num_replications == 0 {
            return Err(SimError::Config("num_replications must be positive".into()));
        }
        if !(self.seconds_per_slot > 0.0) {
            return Err(SimError::Config("seconds_per_slot must be positive".into()));
        }
        if self.quantiles.is_empty() {
            return Err(SimError::Config("quantiles must be non-empty".into()));
        }
        for pair in self.quantiles.windows(2) {
            if pair[0] >= pair[1] {
                return Err(SimError::Config("quantiles must be sorted ascending".into()));
            }
        }
        if self.quantiles.iter().any(|q| !(0.0 < *q && *q < 1.0)) {
            return Err(SimError::Config("quantiles must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn slot_us(&self) -> i64 {
        (self.seconds_per_slot * 1e6).round() as i64
    }
}
