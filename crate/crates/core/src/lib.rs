//! Load-balancing simulator for account-based sharded blockchains.
//!
//! The library models shards as nodes of a connected overlay graph and
//! balances per-shard workloads between fixed-length epochs. Three balancers
//! are provided:
//!
//! * a distributed diffusion balancer built on average consensus with
//!   Metropolis-Hastings weights, which accumulates per-neighbor transfer
//!   vectors and realizes them through round-based account migration;
//! * LPT (longest processing time first), a centralized list scheduler;
//! * MULTIFIT, a centralized capacity-bisection scheduler backed by
//!   first-fit-decreasing bin packing.
//!
//! A brute-force makespan oracle certifies the approximation bounds of the
//! centralized schedulers on small instances. The `sim` module drives
//! multi-epoch replays of ingested transaction workloads, and `cli` exposes
//! everything as batch subcommands.

pub mod cli;
pub mod decimal;
pub mod diffusion;
pub mod fixture;
pub mod migration;
pub mod schedulers;
pub mod sim;
pub mod topology;
pub mod workload;

use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unassigned account: {0}")]
    UnassignedAccount(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
