use std::io::Write;

use trace_library::TraceRepository;

use crate::config::SimulationConfig;
use crate::error::SimError;
use crate::stats::{mean, mean_and_ci95, quantile_type7};
use crate::world::{replication_seed, run_replication};

#[derive(Debug, Clone)]
pub struct QuantileStat {
    pub quantile: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Study output for one gamma value.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub gamma: f64,
    /// Raw RTT pools, one per replication.
    pub replication_pools: Vec<Vec<f64>>,
    /// Per-replication quantile values, aligned with `config.quantiles`.
    pub replication_quantiles: Vec<Vec<f64>>,
    /// Mean and 95% CI across replications, per quantile.
    pub quantile_stats: Vec<QuantileStat>,
    pub total_migrations: u64,
    pub migrations_per_slot_mean: f64,
}

/// Runs `config.num_replications` replications for every gamma in the
/// grid. Replication seeds derive from the study seed only, so the same
/// replication index sees identical client activity at every gamma.
/// Quantiles are computed per replication, then averaged with a 95%
/// confidence interval across replications.
pub fn run_study(
    config: &SimulationConfig,
    gamma_grid: &[f64],
    repo: &TraceRepository,
) -> Result<Vec<SimulationResult>, SimError> {
    if gamma_grid.is_empty() {
        return Err(SimError::Config("gamma grid must be non-empty".into()));
    }
    let mut results = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        let mut gamma_config = config.clone();
        gamma_config.gamma = gamma;
        gamma_config.validate()?;
        let mut pools = Vec::new();
        let mut per_rep_quantiles = Vec::new();
        let mut total_migrations = 0u64;
        for rep in 0..config.num_replications {
            let outcome =
                run_replication(&gamma_config, repo, replication_seed(config.seed, rep))?;
            let mut sorted = outcome.rtt_pool.clone();
            sorted.sort_by(f64::total_cmp);
            let quantiles: Vec<f64> = if sorted.is_empty() {
                vec![f64::NAN; config.quantiles.len()]
            } else {
                config
                    .quantiles
                    .iter()
                    .map(|q| quantile_type7(&sorted, *q))
                    .collect()
            };
            per_rep_quantiles.push(quantiles);
            total_migrations += outcome.migrations;
            pools.push(outcome.rtt_pool);
        }
        let quantile_stats = config
            .quantiles
            .iter()
            .enumerate()
            .map(|(qi, q)| {
                let values: Vec<f64> = per_rep_quantiles.iter().map(|r| r[qi]).collect();
                let (m, hw) = mean_and_ci95(&values);
                QuantileStat {
                    quantile: *q,
                    mean: m,
                    ci_low: m - hw,
                    ci_high: m + hw,
                }
            })
            .collect();
        let migrations_per_slot_mean = total_migrations as f64
            / (config.num_replications as f64 * config.num_slots.max(1) as f64);
        results.push(SimulationResult {
            gamma,
            replication_pools: pools,
            replication_quantiles: per_rep_quantiles,
            quantile_stats,
            total_migrations,
            migrations_per_slot_mean,
        });
    }
    Ok(results)
}

/// CSV suitable for plotting quantile-vs-gamma curves.
pub fn write_study_csv(results: &[SimulationResult], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "gamma,quantile,mean,ci_low,ci_high,migrations_per_slot_mean")?;
    for result in results {
        for stat in &result.quantile_stats {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                result.gamma,
                stat.quantile,
                stat.mean,
                stat.ci_low,
                stat.ci_high,
                result.migrations_per_slot_mean
            )?;
        }
    }
    Ok(())
}

impl SimulationResult {
    /// The replication means of one quantile, mostly for tests.
    pub fn quantile_values(&self, index: usize) -> Vec<f64> {
        self.replication_quantiles.iter().map(|r| r[index]).collect()
    }

    pub fn stat_for(&self, quantile: f64) -> Option<&QuantileStat> {
        self.quantile_stats
            .iter()
            .find(|s| (s.quantile - quantile).abs() < 1e-12)
    }

    pub fn mean_pool_size(&self) -> f64 {
        mean(&self
            .replication_pools
            .iter()
            .map(|p| p.len() as f64)
            .collect::<Vec<_>>())
    }
}
