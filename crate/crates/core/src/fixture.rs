//! Synthetic transaction fixtures in the ingestion CSV format.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal::DecimalScale;
use crate::workload::Transaction;

/// Shape of the per-account cost distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum Skew {
    /// Account costs roughly uniform.
    Uniform,
    /// One account carries the bulk of the load.
    Pointmass,
    /// Heavy-tailed account costs (Pareto, alpha ~ 1.2).
    Pareto,
}

/// Deterministically generate `accounts` accounts with two transactions
/// each. Fees are produced in scaled units consistent with `scale`.
pub fn gen_fixture(accounts: usize, seed: u64, skew: Skew, scale: DecimalScale) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Unit-scale fee magnitudes around 0.001..0.1 natural units, or plain
    // integers when scale is 0.
    let unit = if scale.0 >= 3 {
        scale.denominator() / 1000
    } else {
        1
    };
    let mut txs = Vec::with_capacity(accounts * 2);
    for a in 0..accounts {
        let total_units: u64 = match skew {
            Skew::Uniform => rng.gen_range(1..=100) * unit,
            Skew::Pointmass => {
                if a == 0 {
                    100_000 * unit
                } else {
                    rng.gen_range(1..=10) * unit
                }
            }
            Skew::Pareto => {
                // inverse-transform Pareto: xm * u^(-1/alpha), tail capped
                // so a single account cannot dominate a whole shard
                let u: f64 = rng.gen_range(1e-6..1.0);
                let raw = (20.0 * u.powf(-1.0 / 1.2)).min(500.0);
                (raw * unit as f64).max(1.0) as u64
            }
        };
        let first = total_units / 2;
        let second = total_units - first;
        let src = format!("acct{a:05}");
        let dst = format!("acct{:05}", (a + 1) % accounts.max(1));
        for (k, fee) in [first, second].into_iter().enumerate() {
            txs.push(Transaction {
                tx_hash: format!("0x{a:05x}{k}"),
                block_hash: format!("0xb{:04x}", a / 10),
                source: src.clone(),
                destination: dst.clone(),
                start_time: 1_700_000_000 + (a * 2 + k) as i64,
                amount: fee * 10,
                fee,
            });
        }
    }
    txs
}
