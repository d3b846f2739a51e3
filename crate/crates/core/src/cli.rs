//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 soft failure
//! (diffusion non-convergence or incomplete migration) escalated by
//! `--strict`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::decimal::DecimalScale;
use crate::fixture::{gen_fixture, Skew};
use crate::migration::{run_migration, TransferPlan};
use crate::schedulers::{brute_force_optimal, lpt_schedule, multifit_schedule, PackingRule};
use crate::sim::{
    run_simulation, Algorithm, RebalanceArtifacts, RebalanceTelemetry, SimConfig, SimOutput,
};
use crate::topology::TopologyGraph;
use crate::workload::{
    account_costs, filter_outliers, initial_assignment, parse_transactions, shard_loads,
    write_transactions, AccountCosts,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOFT_FAILURE: i32 = 3;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "shardsim",
    about = "Load-balancing simulator for account-based sharded blockchains",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a transaction CSV, filter outliers, and summarize account costs.
    Ingest(IngestArgs),
    /// Run the multi-epoch simulation and write a JSON report.
    Simulate(SimulateArgs),
    /// Run a single rebalance step over a costs file.
    Balance(BalanceArgs),
    /// Brute-force optimal makespan for a small costs file.
    Oracle(OracleArgs),
    /// Generate a synthetic transaction CSV.
    GenFixture(GenFixtureArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Transaction CSV to read.
    #[arg(long)]
    input: PathBuf,
    /// Fee threshold in natural units; transactions above it are dropped.
    #[arg(long)]
    outlier_threshold: Option<String>,
    /// Fractional decimal digits per load unit.
    #[arg(long, default_value_t = 9)]
    scale: u32,
    /// Summary JSON output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transaction CSV to replay.
    #[arg(long)]
    input: PathBuf,
    /// Report JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Directory for diffusion-iteration and migration-log CSVs.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Override the config's algorithm.
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    /// Override the config's shard count.
    #[arg(long)]
    shards: Option<usize>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Exit nonzero on non-convergence or incomplete migration.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
#[clap(rename_all = "lowercase")]
enum AlgoArg {
    Diffusion,
    Lpt,
    Multifit,
    None,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Diffusion => Algorithm::Diffusion,
            AlgoArg::Lpt => Algorithm::Lpt,
            AlgoArg::Multifit => Algorithm::Multifit,
            AlgoArg::None => Algorithm::None,
        }
    }
}

#[derive(Debug, Args)]
struct BalanceArgs {
    /// Balancing algorithm.
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Account costs JSON ({"account": "cost", ...}, natural units).
    #[arg(long)]
    costs: PathBuf,
    /// Number of shards.
    #[arg(long)]
    shards: usize,
    /// Seed for the initial assignment (diffusion only).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Diffusion spread tolerance in natural units.
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
    /// MULTIFIT bisection rounds.
    #[arg(long, default_value_t = 7)]
    k: usize,
    /// Fractional decimal digits per load unit.
    #[arg(long, default_value_t = 9)]
    scale: u32,
    /// Write the resulting assignment JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit nonzero on non-convergence or incomplete migration.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Account costs JSON ({"account": "cost", ...}, natural units).
    #[arg(long)]
    input: PathBuf,
    /// Number of shards.
    #[arg(long)]
    shards: usize,
    /// Fractional decimal digits per load unit.
    #[arg(long, default_value_t = 9)]
    scale: u32,
}

#[derive(Debug, Args)]
struct GenFixtureArgs {
    /// Number of accounts.
    #[arg(long)]
    accounts: usize,
    /// Shard count the fixture targets (recorded for sizing only).
    #[arg(long, default_value_t = 10)]
    shards: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    skew: Skew,
    /// Fractional decimal digits per load unit.
    #[arg(long, default_value_t = 9)]
    scale: u32,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path too
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Balance(args) => cmd_balance(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::GenFixture(args) => cmd_gen_fixture(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    schema_version: u32,
    transactions_total: usize,
    transactions_kept: usize,
    transactions_removed: usize,
    accounts: usize,
    total_cost: String,
}

fn cmd_ingest(args: IngestArgs) -> Result<i32> {
    let scale = DecimalScale(args.scale);
    let txs = parse_transactions(BufReader::new(File::open(&args.input)?), scale)?;
    let threshold = args
        .outlier_threshold
        .as_deref()
        .map(|s| scale.parse(s))
        .transpose()?;
    let total = txs.len();
    let (kept, removed) = filter_outliers(txs, threshold);
    let costs = account_costs(&kept);
    let summary = IngestSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        transactions_total: total,
        transactions_kept: kept.len(),
        transactions_removed: removed,
        accounts: costs.len(),
        total_cost: scale.format(costs.total()),
    };
    write_json(&args.out, &summary)?;
    println!(
        "ingested {} transactions ({} kept, {} removed), {} accounts, total cost {}",
        summary.transactions_total,
        summary.transactions_kept,
        summary.transactions_removed,
        summary.accounts,
        summary.total_cost
    );
    Ok(EXIT_OK)
}

/// Versioned report document written by `simulate`.
#[derive(Debug, Serialize)]
struct Report<'a> {
    schema_version: u32,
    /// Unix seconds; the one field excluded from byte-level comparisons.
    generated_at: u64,
    config: &'a SimConfig,
    epochs: &'a [crate::sim::EpochReport],
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32> {
    let mut cfg: SimConfig = match &args.config {
        Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))?,
        None => SimConfig::default(),
    };
    if let Some(algo) = args.algo {
        cfg.algorithm = algo.into();
    }
    if let Some(shards) = args.shards {
        cfg.shard_count = shards;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }

    let scale = cfg.decimal_scale;
    let txs = parse_transactions(BufReader::new(File::open(&args.input)?), scale)?;
    let output = run_simulation(&cfg, &txs)?;

    if let Some(dir) = &args.trace_dir {
        std::fs::create_dir_all(dir)?;
        for art in &output.artifacts {
            write_trace_files(dir, art, cfg.shard_count, scale)?;
        }
    }

    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: &cfg,
        epochs: &output.reports,
    };
    write_json(&args.out, &report)?;

    for r in &output.reports {
        println!(
            "epoch {}: total load {}, spread {}, imbalance {:.4}",
            r.epoch, r.total_load, r.spread, r.imbalance_ratio
        );
    }
    if args.strict && has_soft_failure(&output) {
        eprintln!("strict: diffusion did not converge or migration incomplete");
        return Ok(EXIT_SOFT_FAILURE);
    }
    Ok(EXIT_OK)
}

fn has_soft_failure(output: &SimOutput) -> bool {
    output.reports.iter().any(|r| {
        matches!(
            r.rebalance,
            Some(RebalanceTelemetry::Diffusion {
                converged: false,
                ..
            }) | Some(RebalanceTelemetry::Diffusion {
                migration_complete: false,
                ..
            })
        )
    })
}

fn write_trace_files(
    dir: &Path,
    art: &RebalanceArtifacts,
    shard_count: usize,
    scale: DecimalScale,
) -> Result<()> {
    if !art.diffusion_trace.is_empty() {
        let path = dir.join(format!("diffusion_epoch{}.csv", art.epoch));
        let mut w = BufWriter::new(File::create(path)?);
        let header: Vec<String> = std::iter::once("iter".to_string())
            .chain((0..shard_count).map(|i| format!("load_{i}")))
            .chain(std::iter::once("spread".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &art.diffusion_trace {
            let loads: Vec<String> = row.loads.iter().map(|l| format!("{l}")).collect();
            writeln!(w, "{},{},{}", row.iter, loads.join(","), row.spread)?;
        }
    }
    if !art.moves.is_empty() {
        let path = dir.join(format!("migration_epoch{}.csv", art.epoch));
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "round,account,from,to,cost")?;
        for mv in &art.moves {
            writeln!(
                w,
                "{},{},{},{},{}",
                mv.round,
                mv.account,
                mv.from,
                mv.to,
                scale.format(mv.cost)
            )?;
        }
    }
    Ok(())
}

fn read_costs(path: &Path, scale: DecimalScale) -> Result<AccountCosts> {
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let mut costs = AccountCosts::new();
    for (account, value) in raw {
        let text = match &value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(Error::Config(format!(
                    "cost for {account:?} must be a string or number, got {other}"
                )))
            }
        };
        costs.insert(account, scale.parse(&text)?);
    }
    Ok(costs)
}

fn cmd_balance(args: BalanceArgs) -> Result<i32> {
    let scale = DecimalScale(args.scale);
    let costs = read_costs(&args.costs, scale)?;
    match Algorithm::from(args.algo) {
        Algorithm::None => {
            println!("algorithm none: nothing to do");
            Ok(EXIT_OK)
        }
        Algorithm::Lpt => {
            let res = lpt_schedule(&costs, args.shards)?;
            println!("lpt makespan: {}", scale.format(res.makespan));
            maybe_write_assignment(args.out.as_deref(), &res.assignment)?;
            Ok(EXIT_OK)
        }
        Algorithm::Multifit => {
            let res = multifit_schedule(&costs, args.shards, args.k, PackingRule::FirstFit)?;
            println!("multifit makespan: {}", scale.format(res.makespan));
            maybe_write_assignment(args.out.as_deref(), &res.assignment)?;
            Ok(EXIT_OK)
        }
        Algorithm::Diffusion => {
            let g = TopologyGraph::ring(args.shards)?;
            let w = crate::topology::metropolis_weights(&g, crate::topology::WeightMode::Exact);
            let accounts: Vec<String> = costs.accounts().map(String::from).collect();
            let asg = initial_assignment(&accounts, args.shards, args.seed)?;
            let loads_units = shard_loads(&asg, &costs)?;
            let loads: Vec<f64> = loads_units.iter().map(|&u| scale.to_f64(u)).collect();
            let diff = crate::diffusion::run_diffusion(&loads, &w, &g, args.tol, 10_000)?;
            let plan = TransferPlan::from_deltas(&diff.final_state, &g)?;
            let mig = run_migration(&asg, &costs, &plan, &g, 4 * g.diameter().max(1), scale)?;
            let final_loads = shard_loads(&mig.assignment, &costs)?;
            let max = *final_loads.iter().max().unwrap_or(&0);
            let min = *final_loads.iter().min().unwrap_or(&0);
            println!(
                "diffusion: {} iterations (converged: {}), {} migration rounds, makespan {}, spread {}",
                diff.iterations,
                diff.converged,
                mig.rounds_used,
                scale.format(max),
                scale.format(max - min)
            );
            maybe_write_assignment(args.out.as_deref(), &mig.assignment)?;
            if args.strict && (!diff.converged || !mig.complete) {
                return Ok(EXIT_SOFT_FAILURE);
            }
            Ok(EXIT_OK)
        }
    }
}

fn maybe_write_assignment(
    path: Option<&Path>,
    asg: &crate::workload::Assignment,
) -> Result<()> {
    if let Some(path) = path {
        let map: BTreeMap<&str, usize> = asg.iter().collect();
        write_json(path, &map)?;
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<i32> {
    let scale = DecimalScale(args.scale);
    let costs = read_costs(&args.input, scale)?;
    let (_, optimum) = brute_force_optimal(&costs, args.shards)?;
    println!("{}", scale.format(optimum));
    Ok(EXIT_OK)
}

fn cmd_gen_fixture(args: GenFixtureArgs) -> Result<i32> {
    let scale = DecimalScale(args.scale);
    if args.accounts == 0 {
        return Err(Error::Config("accounts must be positive".into()));
    }
    if args.shards == 0 {
        return Err(Error::Config("shards must be positive".into()));
    }
    let txs = gen_fixture(args.accounts, args.seed, args.skew, scale);
    write_transactions(BufWriter::new(File::create(&args.out)?), &txs, scale)?;
    println!(
        "wrote {} transactions for {} accounts to {}",
        txs.len(),
        args.accounts,
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}
