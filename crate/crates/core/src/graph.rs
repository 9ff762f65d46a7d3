//! Undirected weighted communication graphs and their Laplacians.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::symmetric_eigenvalues;

/// Threshold on the second-smallest Laplacian eigenvalue used to call a graph connected.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({0}, {1}) has an endpoint outside 1..={2}")]
    EndpointOutOfRange(usize, usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) has nonpositive weight {2}")]
    NonPositiveWeight(usize, usize, f64),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("grounding diagonal has length {got}, expected {expected}")]
    GroundingLength { expected: usize, got: usize },
    #[error("grounding diagonal must be nonnegative with at least one positive entry")]
    InvalidGrounding,
    #[error("grounded Laplacian requires a connected graph")]
    Disconnected,
}

/// An undirected graph on nodes `0..node_count` with positive edge weights.
///
/// Edges are stored once with `i < j`; the adjacency matrix is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize, f64)>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    /// Builds a graph from zero-based `(i, j, weight)` triples.
    pub fn new(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut stored: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); node_count];
        for &(i, j, w) in edges {
            if i >= node_count || j >= node_count {
                return Err(GraphError::EndpointOutOfRange(i + 1, j + 1, node_count));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i + 1));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight(i + 1, j + 1, w));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if stored.iter().any(|&(x, y, _)| x == a && y == b) {
                return Err(GraphError::DuplicateEdge(a + 1, b + 1));
            }
            stored.push((a, b, w));
            neighbors[a].push((b, w));
            neighbors[b].push((a, w));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(k, _)| k);
        }
        Ok(Self { node_count, edges: stored, neighbors })
    }

    /// Unit-weight graph from zero-based pairs.
    pub fn unweighted(node_count: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        let edges: Vec<_> = pairs.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Neighbors of `node` with edge weights, sorted by neighbor index.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.neighbors[node]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) > 0.0
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.neighbors[node].iter().map(|&(_, w)| w).sum()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, w) in &self.edges {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut l = DMatrix::zeros(n, n);
        for &(i, j, w) in &self.edges {
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
        l
    }

    /// `(L v)_i = sum_k a_ik (v_i - v_k)` without forming the matrix.
    pub fn laplacian_apply(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.node_count {
            let vi = v[i];
            out[i] = self.neighbors[i].iter().map(|&(k, w)| w * (vi - v[k])).sum();
        }
    }

    /// Connectivity by breadth-first traversal from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.node_count
    }

    /// Second-smallest Laplacian eigenvalue (zero for a single node).
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.node_count < 2 {
            return 0.0;
        }
        let eig = symmetric_eigenvalues(&self.laplacian());
        eig[1].max(0.0)
    }

    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.laplacian())
    }

    /// Subgraph induced by `nodes`, renumbered in the order given.
    pub fn induced(&self, nodes: &[usize]) -> Graph {
        let mut edges = Vec::new();
        for (a, &u) in nodes.iter().enumerate() {
            for (b, &v) in nodes.iter().enumerate().skip(a + 1) {
                let w = self.weight(u, v);
                if w > 0.0 {
                    edges.push((a, b, w));
                }
            }
        }
        Graph::new(nodes.len(), &edges).expect("induced subgraph of a valid graph is valid")
    }
}

/// `L + B` for a nonnegative diagonal `B`, with its extreme eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedLaplacian {
    pub matrix: DMatrix<f64>,
    pub grounding: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl GroundedLaplacian {
    pub fn new(graph: &Graph, grounding: &[f64]) -> Result<Self, GraphError> {
        let n = graph.node_count();
        if grounding.len() != n {
            return Err(GraphError::GroundingLength { expected: n, got: grounding.len() });
        }
        if grounding.iter().any(|&b| !(b >= 0.0)) || !grounding.iter().any(|&b| b > 0.0) {
            return Err(GraphError::InvalidGrounding);
        }
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        let mut matrix = graph.laplacian();
        for (i, &b) in grounding.iter().enumerate() {
            matrix[(i, i)] += b;
        }
        let eig = symmetric_eigenvalues(&matrix);
        let lambda_min = eig[0];
        let lambda_max = eig[n - 1];
        debug_assert!(lambda_min > 0.0);
        Ok(Self { matrix, grounding: grounding.to_vec(), lambda_min, lambda_max })
    }
}
