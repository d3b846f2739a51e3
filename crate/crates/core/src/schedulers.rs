//! Centralized makespan schedulers: LPT and MULTIFIT, plus an exact
//! brute-force oracle for certifying their approximation bounds on small
//! instances.

use serde::{Deserialize, Serialize};

use crate::workload::{AccountCosts, Assignment};
use crate::{Error, Result};

/// Bin packing rule used inside MULTIFIT feasibility probes.
///
/// `FirstFit` is the canonical MULTIFIT packing. `NextFit` fills bins
/// strictly sequentially, never reopening an earlier bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackingRule {
    FirstFit,
    NextFit,
}

impl Default for PackingRule {
    fn default() -> Self {
        PackingRule::FirstFit
    }
}

/// One capacity probe of the MULTIFIT bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityProbe {
    pub lower: f64,
    pub upper: f64,
    pub capacity: f64,
    pub fits: bool,
}

/// A schedule plus the telemetry needed to audit it.
#[derive(Debug, Clone)]
pub struct ScheduleResult {
    pub assignment: Assignment,
    pub makespan: u64,
    pub algorithm: &'static str,
    /// Bisection rounds actually run (MULTIFIT only).
    pub rounds_used: Option<usize>,
    /// Per-round (lower, upper, capacity, fits) trace (MULTIFIT only).
    pub capacity_trace: Vec<CapacityProbe>,
}

/// Maximum shard load under an assignment.
pub fn makespan(asg: &Assignment, costs: &AccountCosts) -> u64 {
    let mut loads = vec![0u64; asg.shard_count()];
    for (account, cost) in costs.iter() {
        if let Some(s) = asg.shard_of(account) {
            loads[s] += cost;
        }
    }
    loads.into_iter().max().unwrap_or(0)
}

/// Accounts sorted by descending cost, ties broken by ascending id.
fn sorted_accounts(costs: &AccountCosts) -> Vec<(String, u64)> {
    let mut v: Vec<(String, u64)> = costs.iter().map(|(a, c)| (a.to_string(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Longest-processing-time-first list scheduling: each account, in
/// descending cost order, goes to the currently least-loaded shard
/// (lowest index on ties).
pub fn lpt_schedule(costs: &AccountCosts, n: usize) -> Result<ScheduleResult> {
    if n == 0 {
        return Err(Error::Config("shard count must be positive".into()));
    }
    let mut assignment = Assignment::new(n)?;
    let mut loads = vec![0u64; n];
    for (account, cost) in sorted_accounts(costs) {
        let target = (0..n).min_by_key(|&s| (loads[s], s)).unwrap();
        loads[target] += cost;
        assignment.assign(account, target)?;
    }
    Ok(ScheduleResult {
        makespan: loads.into_iter().max().unwrap_or(0),
        assignment,
        algorithm: "lpt",
        rounds_used: None,
        capacity_trace: Vec::new(),
    })
}

/// Pack pre-sorted (descending) accounts into `n` bins of equal `capacity`.
/// Returns per-bin index lists when everything fits, `None` otherwise.
pub fn ffd_pack(
    sorted: &[(String, u64)],
    n: usize,
    capacity: f64,
    rule: PackingRule,
) -> Option<Vec<Vec<usize>>> {
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut bin_loads = vec![0u64; n];
    let fits = |load: u64, cost: u64| (load + cost) as f64 <= capacity + 1e-9;
    let mut current = 0usize; // next-fit cursor
    for (idx, &(_, cost)) in sorted.iter().enumerate() {
        let placed = match rule {
            PackingRule::FirstFit => (0..n).find(|&b| fits(bin_loads[b], cost)),
            PackingRule::NextFit => loop {
                if current >= n {
                    break None;
                }
                if fits(bin_loads[current], cost) {
                    break Some(current);
                }
                current += 1;
            },
        };
        match placed {
            Some(b) => {
                bins[b].push(idx);
                bin_loads[b] += cost;
            }
            None => return None,
        }
    }
    Some(bins)
}

/// MULTIFIT: bisect a bin capacity for `k` rounds, testing feasibility with
/// first-fit-decreasing packing, and map the bins of the tightest feasible
/// capacity onto shards in index order.
pub fn multifit_schedule(
    costs: &AccountCosts,
    n: usize,
    k: usize,
    rule: PackingRule,
) -> Result<ScheduleResult> {
    if n == 0 {
        return Err(Error::Config("shard count must be positive".into()));
    }
    if k == 0 {
        return Err(Error::Config("multifit rounds must be at least 1".into()));
    }
    let sorted = sorted_accounts(costs);
    let total: u64 = costs.total();
    let max_cost = sorted.first().map(|&(_, c)| c).unwrap_or(0);
    let mut lower = total as f64 / n as f64;
    // Widen the upper bound so a single oversized account stays packable.
    let mut upper = (2.0 * total as f64 / n as f64).max(max_cost as f64);

    let mut best: Option<Vec<Vec<usize>>> = None;
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let capacity = 0.5 * (lower + upper);
        let packing = ffd_pack(&sorted, n, capacity, rule);
        let fits = packing.is_some();
        trace.push(CapacityProbe {
            lower,
            upper,
            capacity,
            fits,
        });
        if let Some(p) = packing {
            best = Some(p);
            upper = capacity;
        } else {
            lower = capacity;
        }
    }
    let bins = match best {
        Some(b) => b,
        // No probe fit; fall back to the feasible upper bound.
        None => ffd_pack(&sorted, n, upper, rule).ok_or_else(|| {
            Error::Config(format!(
                "packing infeasible even at capacity {upper}; broken feasibility guard"
            ))
        })?,
    };

    let mut assignment = Assignment::new(n)?;
    let mut loads = vec![0u64; n];
    for (shard, bin) in bins.iter().enumerate() {
        for &idx in bin {
            let (account, cost) = &sorted[idx];
            assignment.assign(account.clone(), shard)?;
            loads[shard] += cost;
        }
    }
    Ok(ScheduleResult {
        makespan: loads.into_iter().max().unwrap_or(0),
        assignment,
        algorithm: "multifit",
        rounds_used: Some(k),
        capacity_trace: trace,
    })
}

/// Exhaustive minimum-makespan search. Shard-relabeling symmetry is pruned
/// by only allowing an account onto at most one so-far-empty shard, and
/// branches at or above the incumbent makespan are cut.
pub fn brute_force_optimal(costs: &AccountCosts, n: usize) -> Result<(Assignment, u64)> {
    if n == 0 {
        return Err(Error::Config("shard count must be positive".into()));
    }
    let accounts = sorted_accounts(costs);
    let m = accounts.len() as u32;
    // Symmetry pruning fixes the first account's shard, so the effective
    // search space is n^(m-1).
    if (n as f64).powi(m.saturating_sub(1) as i32) > 1e7 {
        return Err(Error::InstanceTooLarge(format!(
            "{n}^{m} assignments exceed the brute-force guard"
        )));
    }

    struct Search<'a> {
        accounts: &'a [(String, u64)],
        n: usize,
        loads: Vec<u64>,
        choice: Vec<usize>,
        best_makespan: u64,
        best_choice: Vec<usize>,
    }

    impl Search<'_> {
        fn go(&mut self, depth: usize, used: usize) {
            if depth == self.accounts.len() {
                let ms = *self.loads.iter().max().unwrap_or(&0);
                if ms < self.best_makespan {
                    self.best_makespan = ms;
                    self.best_choice = self.choice.clone();
                }
                return;
            }
            let cost = self.accounts[depth].1;
            // first unused shard covers all empty shards by symmetry
            let limit = (used + 1).min(self.n);
            for shard in 0..limit {
                let new_load = self.loads[shard] + cost;
                if new_load >= self.best_makespan {
                    continue;
                }
                self.loads[shard] = new_load;
                self.choice[depth] = shard;
                self.go(depth + 1, used.max(shard + 1));
                self.loads[shard] -= cost;
            }
        }
    }

    let total = costs.total();
    let mut search = Search {
        accounts: &accounts,
        n,
        loads: vec![0; n],
        choice: vec![0; accounts.len()],
        best_makespan: total + 1,
        best_choice: vec![0; accounts.len()],
    };
    search.go(0, 0);

    let mut assignment = Assignment::new(n)?;
    for (idx, (account, _)) in accounts.iter().enumerate() {
        assignment.assign(account.clone(), search.best_choice[idx])?;
    }
    let optimum = if accounts.is_empty() {
        0
    } else {
        search.best_makespan
    };
    Ok((assignment, optimum))
}
