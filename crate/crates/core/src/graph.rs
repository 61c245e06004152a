//! Sensor-network topology and the spectral quantities the consensus
//! filters depend on.
//!
//! A [`Graph`] is undirected, simple (no self-loops or duplicate edges) and
//! optionally weighted. All consensus-filter machinery reads the derived
//! adjacency, degree and Laplacian matrices, or the equivalent neighbor
//! lists.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Undirected sensor-network topology.
///
/// Immutable after construction; cheap to clone and safe to share across
/// concurrent simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

/// Adjacency, degree and Laplacian matrices of a graph.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub adjacency: DMatrix<f64>,
    pub degree: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
}

impl Graph {
    /// Builds an unweighted graph from an edge list.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weights = vec![1.0; edges.len()];
        Self::with_weights(n, edges, &weights)
    }

    /// Builds a weighted graph. Every weight must be strictly positive.
    pub fn with_weights(n: usize, edges: &[(usize, usize)], weights: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidScenario("graph needs at least one node".into()));
        }
        if edges.len() != weights.len() {
            return Err(Error::InvalidScenario(format!(
                "{} edges but {} weights",
                edges.len(),
                weights.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for (&(a, b), &w) in edges.iter().zip(weights) {
            if a == b {
                return Err(Error::InvalidScenario(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidScenario(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if !(w > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "edge ({a}, {b}) has non-positive weight {w}"
                )));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidScenario(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
            normalized.push(key);
        }
        let mut neighbors = vec![Vec::new(); n];
        for (&(a, b), &w) in normalized.iter().zip(weights) {
            neighbors[a].push((b, w));
            neighbors[b].push((a, w));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Graph {
            n,
            edges: normalized,
            weights: weights.to_vec(),
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Neighbors of `i` with edge weights, sorted by node index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Weighted degree of node `i`.
    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, w)| w).sum()
    }

    /// Adjacency, degree and Laplacian matrices.
    ///
    /// The Laplacian is degree minus adjacency, so its rows sum to zero.
    pub fn derive_matrices(&self) -> GraphMatrices {
        let n = self.n;
        let mut adjacency = DMatrix::zeros(n, n);
        for (&(a, b), &w) in self.edges.iter().zip(&self.weights) {
            adjacency[(a, b)] = w;
            adjacency[(b, a)] = w;
        }
        let mut degree = DMatrix::zeros(n, n);
        for i in 0..n {
            degree[(i, i)] = self.degree(i);
        }
        let laplacian = &degree - &adjacency;
        GraphMatrices {
            adjacency,
            degree,
            laplacian,
        }
    }

    /// True iff every node is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Upper bound on the consensus step size: 1 / max weighted degree.
    ///
    /// Errors with [`Error::NoEdges`] when every degree is zero.
    pub fn max_step_size(&self) -> Result<f64> {
        let max_deg = (0..self.n).map(|i| self.degree(i)).fold(0.0, f64::max);
        if max_deg <= 0.0 {
            return Err(Error::NoEdges);
        }
        Ok(1.0 / max_deg)
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut groups = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.neighbors[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            groups.push(members);
        }
        groups
    }
}

/// Samples an Erdős–Rényi graph, then joins distinct components with
/// uniformly random extra edges until the result is connected.
///
/// Deterministic for a given seed.
pub fn random_connected_graph(n: usize, edge_probability: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidScenario("graph needs at least one node".into()));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(Error::InvalidScenario(format!(
            "edge probability {edge_probability} outside (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < edge_probability {
                edges.push((i, j));
            }
        }
    }
    let mut graph = Graph::new(n, &edges)?;
    while !graph.is_connected() {
        let groups = graph.components();
        let mut cross = Vec::new();
        for (gi, ga) in groups.iter().enumerate() {
            for gb in groups.iter().skip(gi + 1) {
                for &a in ga {
                    for &b in gb {
                        cross.push((a.min(b), a.max(b)));
                    }
                }
            }
        }
        let pick = cross[rng.random_range(0..cross.len())];
        edges.push(pick);
        graph = Graph::new(n, &edges)?;
    }
    Ok(graph)
}
