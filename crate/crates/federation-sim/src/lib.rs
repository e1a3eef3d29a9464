//! Discrete-time simulator of two federated edge operators.
//!
//! Clients alternate exponentially distributed active and inactive
//! periods. An activating client subscribes to an operator picked
//! uniformly at random and binds one replay trace per operator for the
//! whole active period. Every slot each orchestrator collects the RTTs of
//! its subscribed clients and migrates the worst-RTT fraction gamma of
//! them to the peer operator, effective the next slot. Migration keeps
//! the client's local clock and switches it to its other-operator trace.
//!
//! Everything is driven by one SplitMix64 stream per replication, so a
//! (config, seed) pair fully determines every slot report. The study
//! runner shares replication seeds across gamma values, which makes
//! gamma sweeps paired comparisons.

mod config;
mod error;
pub mod stats;
mod study;
mod world;

pub use config::SimulationConfig;
pub use error::SimError;
pub use study::{run_study, write_study_csv, QuantileStat, SimulationResult};
pub use world::{
    draw_period, migration_quota, run_replication, ClientState, Operator, Phase,
    ReplicationOutcome, SlotReport, SlotSample, World,
};
