//! Shard overlay graphs and consensus weight matrices.
//!
//! Shards communicate over an undirected connected graph. The default
//! overlay is a ring, but any connected edge list is accepted. The
//! Metropolis-Hastings weight matrix built from the graph is symmetric and
//! row-stochastic, which is what the diffusion iteration needs to converge
//! to the global load average.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Undirected connected graph over shard indices `0..n`.
///
/// Immutable after construction; construction enforces connectivity,
/// index bounds, and the absence of self-loops and duplicate edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl TopologyGraph {
    /// Cycle graph on `n >= 3` nodes with edges `(i, (i+1) mod n)`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidTopology(format!(
                "ring requires at least 3 nodes, got {n}"
            )));
        }
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges)
    }

    /// Graph from an explicit edge list. Duplicate edges are dropped;
    /// self-loops, out-of-range indices, and disconnected graphs are errors.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("empty graph".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a},{b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let g = TopologyGraph {
            node_count: n,
            edges: set,
            neighbors,
        };
        if !g.is_connected() {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    fn is_connected(&self) -> bool {
        if self.node_count == 1 {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &self.neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.node_count
    }

    /// Maximum shortest-path hop distance over all node pairs,
    /// by breadth-first search from every node.
    pub fn diameter(&self) -> usize {
        let mut best = 0;
        for start in 0..self.node_count {
            let mut dist = vec![usize::MAX; self.node_count];
            dist[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &u in &self.neighbors[v] {
                    if dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
            best = best.max(*dist.iter().max().unwrap());
        }
        best
    }
}

/// Declarative topology selection used in simulation configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologySpec {
    Ring { n: usize },
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

impl TopologySpec {
    pub fn build(&self) -> Result<TopologyGraph> {
        match self {
            TopologySpec::Ring { n } => TopologyGraph::ring(*n),
            TopologySpec::Edges { n, edges } => TopologyGraph::from_edges(*n, edges),
        }
    }
}

/// How off-diagonal Metropolis-Hastings weights are represented.
///
/// `TableCompat` rounds each neighbor weight to two decimal places before
/// completing the diagonal, reproducing reference traces that compute with
/// w = 0.33 on a ring instead of the exact 1/3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    Exact,
    TableCompat,
}

/// Symmetric row-stochastic consensus weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Metropolis-Hastings weights: `w_ij = 1/(1 + max(d_i, d_j))` for
/// neighbors, diagonal completed so each row sums to 1, zero elsewhere.
pub fn metropolis_weights(g: &TopologyGraph, mode: WeightMode) -> WeightMatrix {
    let n = g.node_count();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        let mut off_sum = 0.0;
        for &j in g.neighbors(i) {
            let mut w = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
            if mode == WeightMode::TableCompat {
                w = (w * 100.0).round() / 100.0;
            }
            values[i * n + j] = w;
            off_sum += w;
        }
        values[i * n + i] = 1.0 - off_sum;
    }
    WeightMatrix { n, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ring_five_structure() {
        let g = TopologyGraph::ring(5).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]);
        for i in 0..5 {
            assert_eq!(g.degree(i), 2);
        }
    }

    #[test]
    fn ring_three_is_triangle() {
        let g = TopologyGraph::ring(3).unwrap();
        for i in 0..3 {
            assert_eq!(g.neighbors(i).len(), 2);
        }
    }

    #[test]
    fn ring_two_rejected() {
        assert!(matches!(
            TopologyGraph::ring(2),
            Err(Error::InvalidTopology(_))
        ));
    }

    #[test]
    fn from_edges_single_edge_path() {
        let g = TopologyGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn from_edges_rejects_disconnected() {
        assert!(TopologyGraph::from_edges(4, &[(0, 1), (2, 3)]).is_err());
    }

    #[test]
    fn from_edges_rejects_out_of_range_and_self_loop() {
        assert!(TopologyGraph::from_edges(3, &[(0, 3)]).is_err());
        assert!(TopologyGraph::from_edges(3, &[(1, 1), (0, 1), (1, 2)]).is_err());
    }

    #[test]
    fn from_edges_dedups() {
        let g = TopologyGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2), (0, 2)]).unwrap();
        assert_eq!(g.edges().count(), 3);
    }

    #[test]
    fn metropolis_ring_five_exact() {
        let g = TopologyGraph::ring(5).unwrap();
        let w = metropolis_weights(&g, WeightMode::Exact);
        for i in 0..5 {
            for &j in g.neighbors(i) {
                assert!((w.get(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
            assert!((w.get(i, i) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metropolis_path_of_two() {
        let g = TopologyGraph::from_edges(2, &[(0, 1)]).unwrap();
        let w = metropolis_weights(&g, WeightMode::Exact);
        assert_eq!(w.get(0, 1), 0.5);
        assert_eq!(w.get(1, 0), 0.5);
        assert_eq!(w.get(0, 0), 0.5);
        assert_eq!(w.get(1, 1), 0.5);
    }

    #[test]
    fn metropolis_star_center_degree_three() {
        let g = TopologyGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let w = metropolis_weights(&g, WeightMode::Exact);
        for leaf in 1..4 {
            assert!((w.get(0, leaf) - 0.25).abs() < 1e-15);
            assert!((w.get(leaf, leaf) - 0.75).abs() < 1e-12);
        }
        assert!((w.get(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn table_compat_ring_uses_033() {
        let g = TopologyGraph::ring(5).unwrap();
        let w = metropolis_weights(&g, WeightMode::TableCompat);
        assert_eq!(w.get(0, 1), 0.33);
        assert!((w.get(0, 0) - 0.34).abs() < 1e-12);
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(TopologyGraph::ring(10).unwrap().diameter(), 5);
        assert_eq!(TopologyGraph::ring(5).unwrap().diameter(), 2);
        let line = TopologyGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(line.diameter(), 3);
    }

    #[test]
    fn diameter_of_rings_is_floor_half() {
        for n in 3..=64 {
            assert_eq!(TopologyGraph::ring(n).unwrap().diameter(), n / 2);
        }
    }

    #[test]
    fn topology_spec_json() {
        let spec: TopologySpec = serde_json::from_str(r#"{"kind":"ring","n":10}"#).unwrap();
        assert_eq!(spec, TopologySpec::Ring { n: 10 });
        let spec: TopologySpec =
            serde_json::from_str(r#"{"kind":"edges","n":2,"edges":[[0,1]]}"#).unwrap();
        assert!(spec.build().is_ok());
    }

    fn random_connected_graph(n: usize, extra: &[(usize, usize)]) -> TopologyGraph {
        // spanning path plus arbitrary extra edges
        let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        for &(a, b) in extra {
            let (a, b) = (a % n, b % n);
            if a != b {
                edges.push((a, b));
            }
        }
        TopologyGraph::from_edges(n, &edges).unwrap()
    }

    proptest! {
        #[test]
        fn weight_matrix_invariants(
            n in 2usize..16,
            extra in proptest::collection::vec((0usize..16, 0usize..16), 0..20),
        ) {
            let g = random_connected_graph(n, &extra);
            let w = metropolis_weights(&g, WeightMode::Exact);
            for i in 0..n {
                let row_sum: f64 = w.row(i).iter().sum();
                prop_assert!((row_sum - 1.0).abs() < 1e-12);
                for j in 0..n {
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                    if i != j {
                        let adjacent = g.has_edge(i, j);
                        prop_assert_eq!(w.get(i, j) > 0.0, adjacent);
                    }
                }
            }
            // determinism
            let w2 = metropolis_weights(&g, WeightMode::Exact);
            prop_assert_eq!(w, w2);
        }
    }
}
