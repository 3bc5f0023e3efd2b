//! Adjacency normalisation and the per-graph propagation operators shared by
//! all layer types.

use super::{CsrMatrix, DenseMatrix};
use crate::{Error, Result};

/// Checks that neighbour lists describe a simple undirected graph.
pub fn validate_neighbors(neighbors: &[Vec<usize>]) -> Result<()> {
    let n = neighbors.len();
    for (i, list) in neighbors.iter().enumerate() {
        for &j in list {
            if j >= n {
                return Err(Error::Shape(format!("node {i} lists neighbour {j} of {n}")));
            }
            if j == i {
                return Err(Error::Shape(format!("self-loop on node {i}")));
            }
            if !neighbors[j].contains(&i) {
                return Err(Error::Shape(format!("edge {i}->{j} has no reverse")));
            }
        }
    }
    Ok(())
}

fn gcn_rows(neighbors: &[Vec<usize>]) -> Vec<Vec<(usize, f64)>> {
    // D̂ counts the added self-loop.
    let degree: Vec<f64> = neighbors.iter().map(|l| (l.len() + 1) as f64).collect();
    neighbors
        .iter()
        .enumerate()
        .map(|(i, list)| {
            std::iter::once(i)
                .chain(list.iter().copied())
                .map(|j| (j, 1.0 / (degree[i] * degree[j]).sqrt()))
                .collect()
        })
        .collect()
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` as a dense matrix.
pub fn normalize_adjacency(neighbors: &[Vec<usize>]) -> Result<DenseMatrix> {
    Ok(normalize_adjacency_sparse(neighbors)?.to_dense())
}

/// Sparse form of [`normalize_adjacency`], used by training.
pub fn normalize_adjacency_sparse(neighbors: &[Vec<usize>]) -> Result<CsrMatrix> {
    validate_neighbors(neighbors)?;
    CsrMatrix::from_rows(neighbors.len(), gcn_rows(neighbors))
}

/// Row-normalised adjacency without self-loops (neighbour mean). Rows of
/// isolated nodes are empty, giving a zero aggregate.
pub fn mean_aggregator(neighbors: &[Vec<usize>]) -> Result<CsrMatrix> {
    validate_neighbors(neighbors)?;
    let rows = neighbors
        .iter()
        .map(|list| {
            let w = 1.0 / list.len().max(1) as f64;
            list.iter().map(|&j| (j, w)).collect()
        })
        .collect();
    CsrMatrix::from_rows(neighbors.len(), rows)
}

/// Everything a layer needs to know about the graph it runs on.
#[derive(Debug, Clone)]
pub struct GraphContext {
    neighbors: Vec<Vec<usize>>,
    gcn: CsrMatrix,
    mean: CsrMatrix,
    /// Attention neighbourhoods: the node itself first, then its neighbours.
    attention: Vec<Vec<usize>>,
}

impl GraphContext {
    pub fn new(neighbors: &[Vec<usize>]) -> Result<Self> {
        let mut neighbors = neighbors.to_vec();
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let gcn = normalize_adjacency_sparse(&neighbors)?;
        let mean = mean_aggregator(&neighbors)?;
        let attention = neighbors
            .iter()
            .enumerate()
            .map(|(i, l)| std::iter::once(i).chain(l.iter().copied()).collect())
            .collect();
        Ok(GraphContext {
            neighbors,
            gcn,
            mean,
            attention,
        })
    }

    /// A graph with `n` isolated nodes; graph layers then see only each node.
    pub fn isolated(n: usize) -> Self {
        Self::new(&vec![Vec::new(); n]).expect("isolated graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn gcn_operator(&self) -> &CsrMatrix {
        &self.gcn
    }

    pub fn mean_operator(&self) -> &CsrMatrix {
        &self.mean
    }

    pub fn attention_lists(&self) -> &[Vec<usize>] {
        &self.attention
    }
}
