//! Undirected communication graph with mandatory self-edges.
//!
//! Node `i`'s neighborhood always contains `i` itself: the local objective
//! term of a node depends on its own block, so every adjacency list is
//! reflexive by construction. Neighbor lists are kept sorted ascending and a
//! single sorted order is used everywhere downstream (gradient sums, message
//! fan-out, audits) so that floating-point reductions are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const GENERATION_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    num_nodes: usize,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from undirected edges. Self-edges are implied and do
    /// not need to be listed; duplicates are ignored.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("no nodes".into()));
        }
        let mut sets: Vec<std::collections::BTreeSet<usize>> = (0..num_nodes)
            .map(|i| std::collections::BTreeSet::from([i]))
            .collect();
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Self {
            num_nodes,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Path graph 0 - 1 - ... - (n-1).
    pub fn path(num_nodes: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (1..num_nodes).map(|i| (i - 1, i)).collect();
        Self::from_edges(num_nodes, &edges)
    }

    /// Complete graph on `num_nodes` nodes.
    pub fn complete(num_nodes: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..num_nodes {
            for j in i + 1..num_nodes {
                edges.push((i, j));
            }
        }
        Self::from_edges(num_nodes, &edges)
    }

    /// Samples Erdos-Renyi graphs G(n, p) until a connected one appears.
    ///
    /// Each attempt uses an independent RNG stream derived from `seed`, so
    /// the result is a deterministic function of `(n, p, seed)`. Fails after
    /// a bounded number of attempts (p too small for connectivity at this n).
    pub fn erdos_renyi_connected(num_nodes: usize, p: f64, seed: u64) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::InvalidParameter(
                "random graph generation needs at least 2 nodes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in [0, 1], got {p}"
            )));
        }
        for attempt in 0..GENERATION_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(attempt as u64);
            let mut edges = Vec::new();
            for i in 0..num_nodes {
                for j in i + 1..num_nodes {
                    if rng.gen::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::from_edges(num_nodes, &edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::RetriesExhausted {
            n: num_nodes,
            p,
            attempts: GENERATION_ATTEMPTS,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Sorted ascending neighborhood of `i`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighborhood size including the self-edge.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        i < self.num_nodes && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Position of `j` within the sorted neighborhood of `i`.
    pub fn neighbor_slot(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors[i].binary_search(&j).ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1usize;
        while let Some(u) = stack.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.num_nodes
    }

    /// Undirected non-self edges as (i, j) with i < j, lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.num_nodes {
            for &j in &self.neighbors[i] {
                if j > i {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Plain-text edge list, one "i j" pair per line, self-edges omitted.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in self.edges() {
            s.push_str(&format!("{i} {j}\n"));
        }
        s
    }

    /// Parses the edge-list format written by [`to_edge_list`](Self::to_edge_list).
    /// Self-edges are re-added implicitly.
    pub fn from_edge_list(num_nodes: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| {
                    Error::InvalidGraph(format!("edge list line {}: expected two indices", lineno + 1))
                })?
                .parse::<usize>()
                .map_err(|_| {
                    Error::InvalidGraph(format!("edge list line {}: bad index", lineno + 1))
                })
            };
            let a = parse(parts.next())?;
            let b = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::InvalidGraph(format!(
                    "edge list line {}: trailing tokens",
                    lineno + 1
                )));
            }
            edges.push((a, b));
        }
        Self::from_edges(num_nodes, &edges)
    }
}
