//! Weighted directed communication graphs.
//!
//! `weights[(i, j)]` is the weight agent `i` puts on information received
//! from agent `j`, so the Laplacian row `i` drives agent `i`. Edge lists are
//! written `(from, to, weight)` and transposed into that convention.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eig_with, LinalgError, Matrix};
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("graphs have different node counts: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no eigenvalue clears the zero threshold")]
    AllZero,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    weights: Matrix,
}

/// JSON form: `{"n": 3, "edges": [[from, to, weight], ...]}` with 0-based nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl DiGraph {
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        Ok(DiGraph {
            weights: Matrix::zeros(n, n),
        })
    }

    /// Builds a graph from `(from, to, weight)` triples. Repeated edges add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut g = DiGraph::empty(n)?;
        for &(from, to, w) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(GraphError::NodeOutOfRange { index, n });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(GraphError::InvalidWeight(w));
            }
            g.weights[(to, from)] += w;
        }
        Ok(g)
    }

    /// Takes an adjacency matrix already in the receive-from convention.
    pub fn from_weights(weights: Matrix) -> Result<Self, GraphError> {
        let n = weights.nrows();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if weights.ncols() != n {
            return Err(GraphError::DimensionMismatch(n, weights.ncols()));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop(i));
            }
        }
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(GraphError::InvalidWeight(w));
        }
        Ok(DiGraph { weights })
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self, GraphError> {
        DiGraph::from_edges(spec.n, &spec.edges)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            n: self.n(),
            edges: self.edges(),
        }
    }

    /// Directed cycle `0 → 1 → … → n−1 → 0` with unit weights.
    pub fn directed_cycle(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        if n == 1 {
            return DiGraph::empty(1);
        }
        DiGraph::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, receiver: usize, sender: usize) -> f64 {
        self.weights[(receiver, sender)]
    }

    /// `(from, to, weight)` for every positive weight, ordered by (from, to).
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for from in 0..n {
            for to in 0..n {
                let w = self.weights[(to, from)];
                if w > 0.0 {
                    out.push((from, to, w));
                }
            }
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.sum()
    }
}

/// `L = D − A` with `D` the diagonal of in-degrees (row sums).
pub fn laplacian(g: &DiGraph) -> Matrix {
    let n = g.n();
    let mut l = -g.weights.clone();
    for i in 0..n {
        l[(i, i)] = g.weights.row(i).sum();
    }
    l
}

/// True when some root reaches every node along directed edges.
pub fn has_spanning_tree(g: &DiGraph) -> bool {
    let n = g.n();
    (0..n).any(|root| reachable_from(g, root).len() == n)
}

fn reachable_from(g: &DiGraph, root: usize) -> BTreeSet<usize> {
    let n = g.n();
    let mut seen = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(j) = stack.pop() {
        for i in 0..n {
            // edge j → i exists when agent i listens to j
            if g.weights[(i, j)] > 0.0 && seen.insert(i) {
                stack.push(i);
            }
        }
    }
    seen
}

pub fn is_balanced(g: &DiGraph) -> bool {
    is_balanced_with(g, &NumericSettings::default())
}

pub fn is_balanced_with(g: &DiGraph, settings: &NumericSettings) -> bool {
    let tol = settings.balance_tol * g.total_weight().max(1.0);
    (0..g.n()).all(|i| {
        let in_degree = g.weights.row(i).sum();
        let out_degree = g.weights.column(i).sum();
        (in_degree - out_degree).abs() <= tol
    })
}

/// Entrywise sum of the weight matrices.
pub fn union(graphs: &[DiGraph]) -> Result<DiGraph, GraphError> {
    let first = graphs.first().ok_or(GraphError::Empty)?;
    let mut weights = first.weights.clone();
    for g in &graphs[1..] {
        if g.n() != first.n() {
            return Err(GraphError::DimensionMismatch(first.n(), g.n()));
        }
        weights += &g.weights;
    }
    Ok(DiGraph { weights })
}

/// Eigenvalue with the smallest strictly positive real part.
pub fn lambda_min_nonzero(m: &Matrix) -> Result<Complex64, GraphError> {
    lambda_min_nonzero_with(m, &NumericSettings::default())
}

pub fn lambda_min_nonzero_with(
    m: &Matrix,
    settings: &NumericSettings,
) -> Result<Complex64, GraphError> {
    let threshold = settings.laplacian_zero * m.norm();
    let spectrum = eig_with(m, settings)?;
    spectrum
        .iter()
        .copied()
        .filter(|z| z.re > threshold)
        .min_by(|a, b| {
            a.re.total_cmp(&b.re)
                .then(a.im.abs().total_cmp(&b.im.abs()))
                .then(b.im.total_cmp(&a.im))
        })
        .ok_or(GraphError::AllZero)
}

/// Number of Laplacian eigenvalues with modulus at most `laplacian_zero·‖L‖`.
pub fn zero_eigenvalue_count(g: &DiGraph, settings: &NumericSettings) -> Result<usize, GraphError> {
    let l = laplacian(g);
    let threshold = settings.laplacian_zero * l.norm();
    Ok(eig_with(&l, settings)?
        .iter()
        .filter(|z| z.norm() <= threshold)
        .count())
}
