//! Multi-epoch simulation: measure per-account costs, predict next-epoch
//! costs from the last epoch, rebalance with a chosen algorithm, and
//! re-measure.
//!
//! Two epoch modes exist. `replay` measures epoch 1 on the initial random
//! assignment, rebalances, then re-measures the same transaction set under
//! the new assignment. `time-partition` splits the transaction stream into
//! contiguous windows by start time and rebalances between windows.

use serde::{Deserialize, Serialize};

use crate::decimal::DecimalScale;
use crate::diffusion::{run_diffusion_traced, DiffusionResult};
use crate::migration::{run_migration, MigrationMove, TransferPlan};
use crate::schedulers::{lpt_schedule, multifit_schedule, CapacityProbe, PackingRule};
use crate::topology::{metropolis_weights, TopologyGraph, TopologySpec, WeightMode};
use crate::workload::{
    filter_outliers, initial_assignment, shard_loads, source_accounts,
    AccountCosts, Assignment, Transaction,
};
use crate::{Error, Result};

/// Balancing algorithm selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Diffusion,
    Lpt,
    Multifit,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochMode {
    Replay,
    TimePartition,
}

fn default_shards() -> usize {
    10
}
fn default_tol() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    10_000
}
fn default_multifit_k() -> usize {
    7
}
fn default_epochs() -> usize {
    2
}
fn default_algorithm() -> Algorithm {
    Algorithm::Diffusion
}
fn default_epoch_mode() -> EpochMode {
    EpochMode::Replay
}
fn default_weight_mode() -> WeightMode {
    WeightMode::Exact
}

/// All experiment knobs; deserializable from a single JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct SimConfig {
    #[serde(default = "default_shards")]
    pub shard_count: usize,
    /// Defaults to a ring over `shard_count` shards.
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_weight_mode")]
    pub weight_mode: WeightMode,
    #[serde(default = "default_tol")]
    pub diffusion_tol: f64,
    #[serde(default = "default_max_iters")]
    pub diffusion_max_iters: usize,
    /// Defaults to 4x the topology diameter.
    #[serde(default)]
    pub migration_max_rounds: Option<usize>,
    #[serde(default = "default_multifit_k")]
    pub multifit_k: usize,
    #[serde(default)]
    pub packing: PackingRule,
    /// Decimal string in natural units; absent means no filtering.
    #[serde(default)]
    pub outlier_threshold: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epoch_mode")]
    pub epoch_mode: EpochMode,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub decimal_scale: DecimalScale,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shard_count == 0 {
            return Err(Error::Config("shard_count must be positive".into()));
        }
        if self.diffusion_tol <= 0.0 {
            return Err(Error::Config("diffusion_tol must be positive".into()));
        }
        if self.multifit_k == 0 {
            return Err(Error::Config("multifit_k must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_topology(&self) -> Result<TopologyGraph> {
        let g = match &self.topology {
            Some(spec) => spec.build()?,
            None => TopologyGraph::ring(self.shard_count)?,
        };
        if g.node_count() != self.shard_count {
            return Err(Error::Config(format!(
                "topology has {} nodes but shard_count is {}",
                g.node_count(),
                self.shard_count
            )));
        }
        Ok(g)
    }

    pub fn outlier_threshold_units(&self) -> Result<Option<u64>> {
        self.outlier_threshold
            .as_deref()
            .map(|s| self.decimal_scale.parse(s))
            .transpose()
    }
}

/// Per-shard figures for one epoch.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShardStats {
    pub shard: usize,
    /// Load as a decimal string in natural units.
    pub load: String,
    pub accounts: usize,
    pub transactions: usize,
}

/// Telemetry of the rebalance that produced an epoch's assignment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum RebalanceTelemetry {
    Diffusion {
        iterations: usize,
        converged: bool,
        migration_rounds: usize,
        migration_complete: bool,
        moves: usize,
        /// Unmet transfer obligations in natural units.
        residual_total: f64,
    },
    Lpt {
        makespan: String,
    },
    Multifit {
        makespan: String,
        rounds_used: usize,
        capacity_trace: Vec<CapacityProbe>,
    },
    None {},
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub shards: Vec<ShardStats>,
    pub total_load: String,
    /// max load minus min load, decimal string in natural units.
    pub spread: String,
    /// max load over mean load; 1.0 is perfect balance.
    pub imbalance_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rebalance: Option<RebalanceTelemetry>,
}

/// One diffusion trace row: iteration, per-shard loads, spread.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub loads: Vec<f64>,
    pub spread: f64,
}

/// Plot- and audit-ready byproducts of one rebalance.
#[derive(Debug, Clone, Default)]
pub struct RebalanceArtifacts {
    /// Epoch the rebalance prepared (the epoch whose report carries the
    /// telemetry).
    pub epoch: usize,
    pub diffusion_trace: Vec<TraceRow>,
    pub moves: Vec<MigrationMove>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub reports: Vec<EpochReport>,
    pub artifacts: Vec<RebalanceArtifacts>,
}

/// Last-value prediction: the coming epoch is expected to cost what the
/// previous epoch measured.
pub fn predict_costs(previous: &AccountCosts) -> AccountCosts {
    previous.clone()
}

/// Measure one epoch under (and possibly extending) an assignment.
///
/// Sources unseen by the assignment are placed on the least-loaded shard at
/// the moment of their first transaction.
pub fn run_epoch(
    asg: &mut Assignment,
    epoch_txs: &[Transaction],
    epoch_index: usize,
    scale: DecimalScale,
) -> Result<(AccountCosts, EpochReport)> {
    let n = asg.shard_count();
    let mut costs = AccountCosts::new();
    let mut loads = vec![0u64; n];
    let mut tx_counts = vec![0usize; n];
    for tx in epoch_txs {
        let shard = match asg.shard_of(&tx.source) {
            Some(s) => s,
            None => {
                let s = (0..n).min_by_key(|&s| (loads[s], s)).unwrap();
                asg.assign(tx.source.clone(), s)?;
                s
            }
        };
        costs.add(&tx.source, tx.fee);
        loads[shard] += tx.fee;
        tx_counts[shard] += 1;
    }
    // Recompute from scratch; must agree with the running sums.
    let loads = shard_loads(asg, &costs)?;
    let account_counts = asg.shard_sizes();

    let total: u64 = loads.iter().sum();
    let max = *loads.iter().max().unwrap_or(&0);
    let min = *loads.iter().min().unwrap_or(&0);
    let mean = total as f64 / n as f64;
    let imbalance_ratio = if total == 0 {
        1.0
    } else {
        max as f64 / mean
    };
    let report = EpochReport {
        epoch: epoch_index,
        shards: (0..n)
            .map(|s| ShardStats {
                shard: s,
                load: scale.format(loads[s]),
                accounts: account_counts[s],
                transactions: tx_counts[s],
            })
            .collect(),
        total_load: scale.format(total),
        spread: scale.format(max - min),
        imbalance_ratio,
        rebalance: None,
    };
    Ok((costs, report))
}

/// Re-assign accounts according to the configured algorithm, using the
/// predicted costs as the loads to balance.
pub fn rebalance(
    asg: &Assignment,
    predicted: &AccountCosts,
    cfg: &SimConfig,
    g: &TopologyGraph,
) -> Result<(Assignment, RebalanceTelemetry, RebalanceArtifacts)> {
    cfg.validate()?;
    let scale = cfg.decimal_scale;
    match cfg.algorithm {
        Algorithm::None => Ok((asg.clone(), RebalanceTelemetry::None {}, RebalanceArtifacts::default())),
        Algorithm::Lpt => {
            let res = lpt_schedule(predicted, cfg.shard_count)?;
            let assignment = carry_unscheduled(asg, res.assignment)?;
            Ok((
                assignment,
                RebalanceTelemetry::Lpt {
                    makespan: scale.format(res.makespan),
                },
                RebalanceArtifacts::default(),
            ))
        }
        Algorithm::Multifit => {
            let res = multifit_schedule(predicted, cfg.shard_count, cfg.multifit_k, cfg.packing)?;
            let assignment = carry_unscheduled(asg, res.assignment)?;
            Ok((
                assignment,
                RebalanceTelemetry::Multifit {
                    makespan: scale.format(res.makespan),
                    rounds_used: res.rounds_used.unwrap_or(0),
                    capacity_trace: res.capacity_trace,
                },
                RebalanceArtifacts::default(),
            ))
        }
        Algorithm::Diffusion => {
            let w = metropolis_weights(g, cfg.weight_mode);
            let loads_units = shard_loads(asg, predicted)?;
            let loads: Vec<f64> = loads_units.iter().map(|&u| scale.to_f64(u)).collect();
            let mut trace = Vec::new();
            let diff: DiffusionResult = run_diffusion_traced(
                &loads,
                &w,
                g,
                cfg.diffusion_tol,
                cfg.diffusion_max_iters,
                |iter, loads, spread| {
                    trace.push(TraceRow {
                        iter,
                        loads: loads.to_vec(),
                        spread,
                    });
                },
            )?;
            // On non-convergence the last transfer ledger is still the best
            // available plan; migrate it and report the flag.
            let plan = TransferPlan::from_deltas(&diff.final_state, g)?;
            let max_rounds = cfg
                .migration_max_rounds
                .unwrap_or_else(|| 4 * g.diameter().max(1));
            let mig = run_migration(asg, predicted, &plan, g, max_rounds, scale)?;
            let telemetry = RebalanceTelemetry::Diffusion {
                iterations: diff.iterations,
                converged: diff.converged,
                migration_rounds: mig.rounds_used,
                migration_complete: mig.complete,
                moves: mig.moves.len(),
                residual_total: mig.residual_total(),
            };
            Ok((
                mig.assignment,
                telemetry,
                RebalanceArtifacts {
                    epoch: 0,
                    diffusion_trace: trace,
                    moves: mig.moves,
                },
            ))
        }
    }
}

/// Schedulers only place accounts that carry predicted cost; accounts known
/// to the old assignment but absent from the prediction keep their shard.
fn carry_unscheduled(old: &Assignment, mut new: Assignment) -> Result<Assignment> {
    for (account, shard) in old.iter() {
        if new.shard_of(account).is_none() {
            new.assign(account.to_string(), shard)?;
        }
    }
    Ok(new)
}

/// Run the full multi-epoch protocol over already-parsed transactions.
pub fn run_simulation(cfg: &SimConfig, txs: &[Transaction]) -> Result<SimOutput> {
    cfg.validate()?;
    let g = cfg.build_topology()?;
    let scale = cfg.decimal_scale;
    let threshold = cfg.outlier_threshold_units()?;
    let (kept, _removed) = filter_outliers(txs.to_vec(), threshold);

    let epoch_windows: Vec<Vec<Transaction>> = match cfg.epoch_mode {
        EpochMode::Replay => vec![kept.clone(); cfg.epochs],
        EpochMode::TimePartition => {
            if kept.len() < cfg.epochs {
                return Err(Error::Config(format!(
                    "{} transactions cannot fill {} time-partition epochs",
                    kept.len(),
                    cfg.epochs
                )));
            }
            partition_windows(&kept, cfg.epochs)
        }
    };

    let accounts = source_accounts(&epoch_windows[0]);
    let mut asg = initial_assignment(&accounts, cfg.shard_count, cfg.seed)?;

    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut artifacts = Vec::new();
    let mut prev_costs: Option<AccountCosts> = None;
    for (e, window) in epoch_windows.iter().enumerate() {
        let mut telemetry = None;
        if let Some(prev) = &prev_costs {
            let predicted = predict_costs(prev);
            let (new_asg, tel, mut art) = rebalance(&asg, &predicted, cfg, &g)?;
            asg = new_asg;
            art.epoch = e;
            if !art.diffusion_trace.is_empty() || !art.moves.is_empty() {
                artifacts.push(art);
            }
            telemetry = Some(tel);
        }
        let (costs, mut report) = run_epoch(&mut asg, window, e, scale)?;
        report.rebalance = telemetry;
        reports.push(report);
        prev_costs = Some(costs);
    }
    Ok(SimOutput { reports, artifacts })
}

/// Sort by start time (stable, input order breaks ties) and cut into
/// `count` near-equal windows.
fn partition_windows(txs: &[Transaction], count: usize) -> Vec<Vec<Transaction>> {
    let mut sorted: Vec<Transaction> = txs.to_vec();
    sorted.sort_by_key(|t| t.start_time);
    let len = sorted.len();
    let base = len / count;
    let extra = len % count;
    let mut windows = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let size = base + usize::from(i < extra);
        windows.push(sorted[start..start + size].to_vec());
        start += size;
    }
    windows
}
