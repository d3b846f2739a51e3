//! Transaction ingestion, per-account cost aggregation, and
//! account-to-shard assignments.
//!
//! Transaction fees stand in for processing times. They are parsed into
//! integer units (see [`crate::decimal`]) so every load sum in this module
//! is exact.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal::DecimalScale;
use crate::{Error, Result};

/// One ingested transaction record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_hash: String,
    pub block_hash: String,
    pub source: String,
    pub destination: String,
    pub start_time: i64,
    /// Transferred amount in scaled integer units.
    pub amount: u64,
    /// Fee in scaled integer units; used as the processing time.
    pub fee: u64,
}

/// Per-account processing costs for one epoch (scaled integer units).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountCosts {
    costs: BTreeMap<String, u64>,
}

impl AccountCosts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        AccountCosts {
            costs: pairs.into_iter().map(|(a, c)| (a.into(), c)).collect(),
        }
    }

    pub fn get(&self, account: &str) -> u64 {
        self.costs.get(account).copied().unwrap_or(0)
    }

    pub fn contains(&self, account: &str) -> bool {
        self.costs.contains_key(account)
    }

    pub fn insert(&mut self, account: String, cost: u64) {
        self.costs.insert(account, cost);
    }

    pub fn add(&mut self, account: &str, cost: u64) {
        *self.costs.entry(account.to_string()).or_insert(0) += cost;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.costs.iter().map(|(a, &c)| (a.as_str(), c))
    }

    pub fn accounts(&self) -> impl Iterator<Item = &str> {
        self.costs.keys().map(|a| a.as_str())
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.costs.values().sum()
    }
}

/// Account-to-shard mapping, the decision variable of the balancing problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    shard_count: usize,
    shard_of: BTreeMap<String, usize>,
}

impl Assignment {
    pub fn new(shard_count: usize) -> Result<Self> {
        if shard_count == 0 {
            return Err(Error::Config("shard count must be positive".into()));
        }
        Ok(Assignment {
            shard_count,
            shard_of: BTreeMap::new(),
        })
    }

    pub fn shard_count(&self) -> usize {
        self.shard_count
    }

    pub fn shard_of(&self, account: &str) -> Option<usize> {
        self.shard_of.get(account).copied()
    }

    pub fn assign(&mut self, account: String, shard: usize) -> Result<()> {
        if shard >= self.shard_count {
            return Err(Error::Config(format!(
                "shard index {shard} out of range for {} shards",
                self.shard_count
            )));
        }
        self.shard_of.insert(account, shard);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.shard_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shard_of.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.shard_of.iter().map(|(a, &s)| (a.as_str(), s))
    }

    /// Accounts resident on one shard, in id order.
    pub fn accounts_on(&self, shard: usize) -> Vec<&str> {
        self.shard_of
            .iter()
            .filter(|(_, &s)| s == shard)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    /// Number of accounts per shard.
    pub fn shard_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.shard_count];
        for &s in self.shard_of.values() {
            sizes[s] += 1;
        }
        sizes
    }
}

/// Parse a header-bearing transaction CSV.
///
/// Expected columns: `tx_hash,block_hash,source,destination,start_time,amount,fee`.
/// Fees and amounts are decimal strings converted exactly into scaled units;
/// malformed rows and duplicate transaction hashes fail with the offending
/// line number.
pub fn parse_transactions<R: Read>(input: R, scale: DecimalScale) -> Result<Vec<Transaction>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    let expected = [
        "tx_hash",
        "block_hash",
        "source",
        "destination",
        "start_time",
        "amount",
        "fee",
    ];
    let actual: Vec<&str> = headers.iter().collect();
    if actual != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected CSV header {actual:?}, expected {expected:?}"),
        });
    }

    let mut txs = Vec::new();
    let mut seen_hashes: HashSet<String> = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record?;
        let row_err = |msg: String| Error::Parse { line, msg };
        if record.len() != expected.len() {
            return Err(row_err(format!(
                "expected {} fields, got {}",
                expected.len(),
                record.len()
            )));
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let tx_hash = field(0);
        if tx_hash.is_empty() {
            return Err(row_err("empty tx_hash".into()));
        }
        if !seen_hashes.insert(tx_hash.clone()) {
            return Err(row_err(format!("duplicate tx_hash {tx_hash:?}")));
        }
        let start_time: i64 = field(4)
            .parse()
            .map_err(|e| row_err(format!("bad start_time: {e}")))?;
        let map_dec = |name: &str, r: Result<u64>| {
            r.map_err(|e| row_err(format!("bad {name}: {e}")))
        };
        let amount = map_dec("amount", scale.parse(&field(5)))?;
        let fee = map_dec("fee", scale.parse(&field(6)))?;
        txs.push(Transaction {
            tx_hash,
            block_hash: field(1),
            source: field(2),
            destination: field(3),
            start_time,
            amount,
            fee,
        });
    }
    Ok(txs)
}

/// Write transactions back out in the ingestion CSV format.
pub fn write_transactions<W: std::io::Write>(
    out: W,
    txs: &[Transaction],
    scale: DecimalScale,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "tx_hash",
        "block_hash",
        "source",
        "destination",
        "start_time",
        "amount",
        "fee",
    ])?;
    for tx in txs {
        writer.write_record([
            tx.tx_hash.as_str(),
            tx.block_hash.as_str(),
            tx.source.as_str(),
            tx.destination.as_str(),
            &tx.start_time.to_string(),
            &scale.format(tx.amount),
            &scale.format(tx.fee),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Drop transactions whose fee exceeds `threshold` (scaled units).
/// `None` disables filtering.
pub fn filter_outliers(
    txs: Vec<Transaction>,
    threshold: Option<u64>,
) -> (Vec<Transaction>, usize) {
    match threshold {
        None => (txs, 0),
        Some(limit) => {
            let total = txs.len();
            let kept: Vec<Transaction> = txs.into_iter().filter(|t| t.fee <= limit).collect();
            let removed = total - kept.len();
            (kept, removed)
        }
    }
}

/// Sum fees per source account. The account universe is exactly the set of
/// source accounts; destination-only accounts carry no load.
pub fn account_costs(txs: &[Transaction]) -> AccountCosts {
    let mut costs = AccountCosts::new();
    for tx in txs {
        costs.add(&tx.source, tx.fee);
    }
    costs
}

/// Source accounts in order of first appearance.
pub fn source_accounts(txs: &[Transaction]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for tx in txs {
        if seen.insert(tx.source.as_str()) {
            out.push(tx.source.clone());
        }
    }
    out
}

/// Seeded shuffle followed by round-robin assignment; shard sizes differ by
/// at most one and the result is deterministic in (account order, n, seed).
pub fn initial_assignment(accounts: &[String], n: usize, seed: u64) -> Result<Assignment> {
    let mut asg = Assignment::new(n)?;
    let mut shuffled: Vec<&String> = accounts.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    for (i, account) in shuffled.into_iter().enumerate() {
        asg.assign(account.clone(), i % n)?;
    }
    Ok(asg)
}

/// Per-shard load sums. Every account carrying cost must be assigned.
pub fn shard_loads(asg: &Assignment, costs: &AccountCosts) -> Result<Vec<u64>> {
    let mut loads = vec![0u64; asg.shard_count()];
    for (account, cost) in costs.iter() {
        match asg.shard_of(account) {
            Some(shard) => loads[shard] += cost,
            None => return Err(Error::UnassignedAccount(account.to_string())),
        }
    }
    Ok(loads)
}
