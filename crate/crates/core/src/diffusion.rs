//! Diffusion load balancing by distributed average consensus.
//!
//! Each shard repeatedly replaces its load with the weighted average of its
//! own and its neighbors' loads, while a per-neighbor transfer vector
//! accumulates the net load the shard owes each neighbor. Once the spread
//! between the largest and smallest load falls under the tolerance, the
//! positive transfer-vector entries are the amounts to migrate.
//!
//! Updates are synchronous: all shards read the previous iteration's loads.
//! The contract forbids reading intra-step partial updates; steps are
//! sequential rounds.

use crate::topology::{TopologyGraph, WeightMatrix};
use crate::{Error, Result};

/// Loads and accumulated transfer vectors at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    /// Iteration counter.
    pub t: usize,
    /// Per-shard continuous loads at iteration `t`.
    pub loads: Vec<f64>,
    /// Row-major n*n transfer ledger; `deltas[i*n+j]` is the net load shard
    /// `i` owes shard `j` so far. Zero wherever `j` is not a neighbor of `i`.
    pub deltas: Vec<f64>,
}

impl DiffusionState {
    pub fn new(loads: Vec<f64>) -> Self {
        let n = loads.len();
        DiffusionState {
            t: 0,
            loads,
            deltas: vec![0.0; n * n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.loads.len()
    }

    pub fn delta(&self, i: usize, j: usize) -> f64 {
        self.deltas[i * self.loads.len() + j]
    }

    /// max load minus min load; 0 for empty systems.
    pub fn spread(&self) -> f64 {
        spread_of(&self.loads)
    }
}

fn spread_of(loads: &[f64]) -> f64 {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &l in loads {
        min = min.min(l);
        max = max.max(l);
    }
    if loads.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Outcome of a diffusion run.
#[derive(Debug, Clone)]
pub struct DiffusionResult {
    pub final_state: DiffusionState,
    pub iterations: usize,
    pub converged: bool,
    /// Spread after each completed iteration (index 0 = initial spread).
    pub spread_history: Vec<f64>,
}

/// One synchronous iteration: accumulate transfer vectors from the
/// pre-step loads, then apply the load update.
pub fn diffusion_step(
    state: &DiffusionState,
    w: &WeightMatrix,
    g: &TopologyGraph,
) -> Result<DiffusionState> {
    let n = state.node_count();
    if w.node_count() != n || g.node_count() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has {n} shards, weights {}, graph {}",
            w.node_count(),
            g.node_count()
        )));
    }
    let mut next = state.clone();
    for i in 0..n {
        let mut outflow = 0.0;
        for &j in g.neighbors(i) {
            let transfer = w.get(i, j) * (state.loads[i] - state.loads[j]);
            next.deltas[i * n + j] += transfer;
            outflow += transfer;
        }
        next.loads[i] = state.loads[i] - outflow;
    }
    next.t += 1;
    Ok(next)
}

/// Iterate until the load spread drops to `tol` or `max_iters` is reached.
/// Non-convergence is reported through the `converged` flag, not an error.
pub fn run_diffusion(
    loads0: &[f64],
    w: &WeightMatrix,
    g: &TopologyGraph,
    tol: f64,
    max_iters: usize,
) -> Result<DiffusionResult> {
    run_diffusion_traced(loads0, w, g, tol, max_iters, |_, _, _| {})
}

/// Same as [`run_diffusion`], invoking `trace(iter, loads, spread)` for the
/// initial state and after every completed iteration.
pub fn run_diffusion_traced<F>(
    loads0: &[f64],
    w: &WeightMatrix,
    g: &TopologyGraph,
    tol: f64,
    max_iters: usize,
    mut trace: F,
) -> Result<DiffusionResult>
where
    F: FnMut(usize, &[f64], f64),
{
    if tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    let mut state = DiffusionState::new(loads0.to_vec());
    let mut spread_history = vec![state.spread()];
    trace(0, &state.loads, state.spread());
    let mut converged = state.spread() <= tol;
    while !converged && state.t < max_iters {
        state = diffusion_step(&state, w, g)?;
        let s = state.spread();
        spread_history.push(s);
        trace(state.t, &state.loads, s);
        converged = s <= tol;
    }
    Ok(DiffusionResult {
        iterations: state.t,
        converged,
        final_state: state,
        spread_history,
    })
}
