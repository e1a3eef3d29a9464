use std::sync::Arc;

use trace_library::prng::{derive_seed, SplitMix64};
use trace_library::{NetworkTrace, ReplayQuery, TraceRepository};

use crate::config::SimulationConfig;
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Op1,
    Op2,
}

impl Operator {
    pub fn other(self) -> Operator {
        match self {
            Operator::Op1 => Operator::Op2,
            Operator::Op2 => Operator::Op1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Operator::Op1 => 0,
            Operator::Op2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Active,
    Inactive,
}

/// One simulated client. The two traces are bound at activation and stay
/// fixed for the whole active period; migration only flips `operator`.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: u32,
    pub phase: Phase,
    pub phase_remaining: u32,
    pub operator: Operator,
    pub local_clock: u64,
    traces: Option<(Arc<NetworkTrace>, Arc<NetworkTrace>)>,
}

impl ClientState {
    pub fn trace_for(&self, operator: Operator) -> Option<&Arc<NetworkTrace>> {
        self.traces.as_ref().map(|(op1, op2)| match operator {
            Operator::Op1 => op1,
            Operator::Op2 => op2,
        })
    }
}

/// One active client's RTT reading in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSample {
    pub client_id: u32,
    pub operator: Operator,
    pub local_clock: u64,
    pub rtt_ms: f64,
    pub migrated: bool,
}

/// What one slot produced: per-operator subscription counts, the RTTs
/// collected from subscribed clients (client id order), and who migrated.
#[derive(Debug, Clone)]
pub struct SlotReport {
    pub slot: u32,
    pub subscribed: [u32; 2],
    pub samples: Vec<SlotSample>,
    pub migrated: Vec<u32>,
}

#[derive(Debug, Default)]
pub struct ReplicationOutcome {
    /// Every collected RTT in slot order, client id order within a slot.
    pub rtt_pool: Vec<f64>,
    pub migrations: u64,
    pub reports: Vec<SlotReport>,
}

/// Draws an exponential period with the given mean, rounded to a whole
/// number of slots with a floor of one.
pub fn draw_period(prng: &mut SplitMix64, mean_slots: f64) -> u32 {
    let u = prng.next_f64();
    let x = -mean_slots * (1.0 - u).ln();
    (x.round() as u32).max(1)
}

/// ceil(gamma * active), robust to binary-float dust in the product
/// (0.1 * 30 must yield 3, not 4), capped at the candidate count.
pub fn migration_quota(gamma: f64, active: usize) -> usize {
    if active == 0 || gamma <= 0.0 {
        return 0;
    }
    let product = gamma * active as f64;
    let quota = (product - 1e-9).ceil().max(0.0) as usize;
    quota.min(active)
}

/// The simulation state for one replication.
///
/// Per-slot order of business:
/// 1. phase transitions (client id order; the only PRNG consumer):
///    an expiring inactive client activates, picks an operator uniformly,
///    draws two selection seeds and binds one circular trace per operator;
///    an expiring active client deactivates,
/// 2. every active client reports the RTT of its current operator's trace
///    at `local_clock * seconds_per_slot`,
/// 3. per operator, the ceil(gamma * subscribed) clients with the highest
///    RTT switch operator (ties broken by ascending client id), effective
///    next slot,
/// 4. clocks advance.
///
/// Migration consumes no randomness, so runs with different gamma but the
/// same seed share the whole activity and trace-binding history.
pub struct World<'a> {
    config: &'a SimulationConfig,
    repo: &'a TraceRepository,
    prng: SplitMix64,
    clients: Vec<ClientState>,
    slot: u32,
}

impl<'a> World<'a> {
    pub fn new(
        config: &'a SimulationConfig,
        repo: &'a TraceRepository,
        replication_seed: u64,
    ) -> Result<World<'a>, SimError> {
        config.validate()?;
        let mut prng = SplitMix64::new(replication_seed);
        let clients = (0..config.num_clients)
            .map(|client_id| ClientState {
                client_id,
                phase: Phase::Inactive,
                phase_remaining: draw_period(&mut prng, config.mean_period_slots),
                operator: Operator::Op1,
                local_clock: 0,
                traces: None,
            })
            .collect();
        Ok(World {
            config,
            repo,
            prng,
            clients,
            slot: 0,
        })
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn step_slot(&mut self) -> Result<SlotReport, SimError> {
        let slot = self.slot;
        // 1. phase transitions
        for client in &mut self.clients {
            if client.phase_remaining > 0 {
                continue;
            }
            match client.phase {
                Phase::Inactive => {
                    client.phase = Phase::Active;
                    client.phase_remaining =
                        draw_period(&mut self.prng, self.config.mean_period_slots);
                    client.operator = if self.prng.next_f64() < 0.5 {
                        Operator::Op1
                    } else {
                        Operator::Op2
                    };
                    let seed_op1 = self.prng.next_u64();
                    let seed_op2 = self.prng.next_u64();
                    let op1 = self
                        .repo
                        .open_trace(&self.config.trace_query_op1, seed_op1, true)?;
                    let op2 = self
                        .repo
                        .open_trace(&self.config.trace_query_op2, seed_op2, true)?;
                    client.traces = Some((op1, op2));
                    client.local_clock = 0;
                }
                Phase::Active => {
                    client.phase = Phase::Inactive;
                    client.phase_remaining =
                        draw_period(&mut self.prng, self.config.mean_period_slots);
                    client.traces = None;
                }
            }
        }

        // 2. RTT collection from subscribed (= active) clients
        let slot_us = self.config.slot_us();
        let mut samples = Vec::new();
        let mut subscribed = [0u32; 2];
        for client in &self.clients {
            if client.phase != Phase::Active {
                continue;
            }
            subscribed[client.operator.index()] += 1;
            let trace = client.trace_for(client.operator).expect("active client has traces");
            let query = ReplayQuery::from_us(client.local_clock as i64 * slot_us)
                .expect("non-negative replay time");
            let rtt_ms = trace.get_rtt(query)?;
            samples.push(SlotSample {
                client_id: client.client_id,
                operator: client.operator,
                local_clock: client.local_clock,
                rtt_ms,
                migrated: false,
            });
        }

        // 3. per-operator migration of the worst-RTT fraction
        let mut migrated = Vec::new();
        for operator in [Operator::Op1, Operator::Op2] {
            let mut candidates: Vec<(f64, u32)> = samples
                .iter()
                .filter(|s| s.operator == operator)
                .map(|s| (s.rtt_ms, s.client_id))
                .collect();
            let quota = migration_quota(self.config.gamma, candidates.len());
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            for (_, client_id) in candidates.into_iter().take(quota) {
                migrated.push(client_id);
                self.clients[client_id as usize].operator = operator.other();
                if let Some(sample) = samples.iter_mut().find(|s| s.client_id == client_id) {
                    sample.migrated = true;
                }
            }
        }
        migrated.sort_unstable();

        // 4. advance
        for client in &mut self.clients {
            client.phase_remaining -= 1;
            if client.phase == Phase::Active {
                client.local_clock += 1;
            }
        }
        self.slot += 1;
        Ok(SlotReport {
            slot,
            subscribed,
            samples,
            migrated,
        })
    }
}

/// Runs `config.num_slots` slots and pools every collected RTT.
pub fn run_replication(
    config: &SimulationConfig,
    repo: &TraceRepository,
    replication_seed: u64,
) -> Result<ReplicationOutcome, SimError> {
    let mut world = World::new(config, repo, replication_seed)?;
    let mut outcome = ReplicationOutcome::default();
    for _ in 0..config.num_slots {
        let report = world.step_slot()?;
        outcome.rtt_pool.extend(report.samples.iter().map(|s| s.rtt_ms));
        outcome.migrations += report.migrated.len() as u64;
        outcome.reports.push(report);
    }
    Ok(outcome)
}

/// The documented seed derivation for replication r of a study: shared
/// across gamma values so sweeps compare like with like.
pub fn replication_seed(study_seed: u64, replication: u32) -> u64 {
    derive_seed(study_seed, replication as u64)
}
