//! Undirected neighborhood graphs over measurement sites.

use std::collections::BTreeSet;

use crate::error::{Result, RsmError};

/// Undirected simple graph. Edges are stored once with `j < k`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    // CSR adjacency: neighbors of j are adj[offsets[j]..offsets[j+1]] as (node, edge index)
    offsets: Vec<usize>,
    adjacency: Vec<(usize, usize)>,
}

impl NeighborhoodGraph {
    /// Builds a graph from unordered pairs. Self-loops, duplicates and
    /// out-of-range indices are rejected.
    pub fn new(node_count: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(RsmError::Data("graph must have at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= node_count || b >= node_count {
                return Err(RsmError::Data(format!(
                    "edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            if a == b {
                return Err(RsmError::Data(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(RsmError::Data(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self::from_sorted_edges(node_count, set.into_iter().collect()))
    }

    fn from_sorted_edges(node_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; node_count];
        for &(j, k) in &edges {
            degree[j] += 1;
            degree[k] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..node_count].to_vec();
        let mut adjacency = vec![(0, 0); offsets[node_count]];
        for (e, &(j, k)) in edges.iter().enumerate() {
            adjacency[fill[j]] = (k, e);
            fill[j] += 1;
            adjacency[fill[k]] = (j, e);
            fill[k] += 1;
        }
        NeighborhoodGraph {
            node_count,
            edges,
            offsets,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of `j` paired with the index of the connecting edge.
    pub fn neighbors(&self, j: usize) -> &[(usize, usize)] {
        &self.adjacency[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn degree(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        let mut visited = 1;
        while let Some(j) = stack.pop() {
            for &(k, _) in self.neighbors(j) {
                if !seen[k] {
                    seen[k] = true;
                    visited += 1;
                    stack.push(k);
                }
            }
        }
        visited == self.node_count
    }
}

/// 4-neighborhood on a `width`×`height` image. Node `(row, col)` has index
/// `row * width + col`.
pub fn build_grid_graph(width: usize, height: usize) -> NeighborhoodGraph {
    assert!(width >= 1 && height >= 1, "grid dimensions must be positive");
    let mut edges = Vec::with_capacity(2 * width * height);
    for r in 0..height {
        for c in 0..width {
            let j = r * width + c;
            if c + 1 < width {
                edges.push((j, j + 1));
            }
            if r + 1 < height {
                edges.push((j, j + width));
            }
        }
    }
    // Row-major generation already yields lexicographically sorted pairs.
    NeighborhoodGraph::from_sorted_edges(width * height, edges)
}
