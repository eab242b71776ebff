//! Undirected communication graphs and their Laplacians.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Complete,
    Star,
    Path,
    EdgeList(Vec<(usize, usize)>),
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Ring => "ring",
            Topology::Complete => "complete",
            Topology::Star => "star",
            Topology::Path => "path",
            Topology::EdgeList(_) => "edges",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "ring" => Topology::Ring,
            "complete" => Topology::Complete,
            "star" => Topology::Star,
            "path" => Topology::Path,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CommGraph {
    topology: Topology,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    laplacian: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl CommGraph {
    /// Builds the named topology on `n ≥ 2` nodes. Edge lists must be
    /// connected and free of self-loops.
    pub fn new(topology: Topology, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let mut edges = BTreeSet::new();
        let mut add = |i: usize, j: usize| {
            edges.insert((i.min(j), i.max(j)));
        };
        match &topology {
            Topology::Ring => (0..n).for_each(|i| add(i, (i + 1) % n)),
            Topology::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        add(i, j);
                    }
                }
            }
            Topology::Star => (1..n).for_each(|i| add(0, i)),
            Topology::Path => (0..n - 1).for_each(|i| add(i, i + 1)),
            Topology::EdgeList(list) => {
                for &(i, j) in list {
                    if i >= n || j >= n {
                        return Err(Error::InvalidGraph(format!(
                            "edge ({i}, {j}) references a node outside 0..{n}"
                        )));
                    }
                    if i == j {
                        return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
                    }
                    add(i, j);
                }
            }
        }

        let mut neighbors = vec![Vec::new(); n];
        let mut laplacian = DMatrix::zeros(n, n);
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
            laplacian[(i, j)] = -1.0;
            laplacian[(j, i)] = -1.0;
        }
        for (i, nb) in neighbors.iter_mut().enumerate() {
            nb.sort_unstable();
            laplacian[(i, i)] = nb.len() as f64;
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(laplacian.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigenvalues.sort_by(f64::total_cmp);

        let graph = Self {
            topology,
            edges,
            neighbors,
            laplacian,
            eigenvalues,
        };
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(graph)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Laplacian eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `κ = |L|`, the largest Laplacian eigenvalue.
    pub fn kappa(&self) -> f64 {
        *self.eigenvalues.last().expect("n >= 2")
    }

    pub fn algebraic_connectivity(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `L ⊗ I_block`.
    pub fn kron_laplacian(&self, block: usize) -> DMatrix<f64> {
        linalg::kronecker_identity(&self.laplacian, block)
    }
}

pub fn make_topology(kind: Topology, n: usize) -> Result<CommGraph> {
    CommGraph::new(kind, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn complete_kappa() {
        let g = CommGraph::new(Topology::Complete, 5).unwrap();
        assert!((g.kappa() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ring_kappa_matches_circulant_spectrum() {
        let g = CommGraph::new(Topology::Ring, 5).unwrap();
        let expected = (0..5)
            .map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / 5.0).cos())
            .fold(0.0, f64::max);
        assert!((g.kappa() - expected).abs() < 1e-12);
        assert!((g.kappa() - 3.618_033_988_749_895).abs() < 1e-12);
    }

    #[test]
    fn path_two() {
        let g = CommGraph::new(Topology::Path, 2).unwrap();
        assert_eq!(
            g.laplacian(),
            &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert!((g.kappa() - 2.0).abs() < 1e-12);
        // a two-node ring is the same single edge
        let r = CommGraph::new(Topology::Ring, 2).unwrap();
        assert_eq!(r.num_edges(), 1);
    }

    #[test]
    fn kron_blocks() {
        let g = CommGraph::new(Topology::Path, 2).unwrap();
        let k = g.kron_laplacian(2);
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(k.view((0, 0), (2, 2)), i2);
        assert_eq!(k.view((0, 2), (2, 2)), -&i2);
        assert_eq!(g.kron_laplacian(1), *g.laplacian());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            CommGraph::new(Topology::Ring, 1),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            CommGraph::new(Topology::EdgeList(vec![(0, 1), (2, 3)]), 4),
            Err(Error::Disconnected)
        ));
        assert!(CommGraph::new(Topology::EdgeList(vec![(0, 0)]), 2).is_err());
    }

    #[test]
    fn laplacian_rows_and_columns_sum_to_zero() {
        for t in [
            Topology::Ring,
            Topology::Complete,
            Topology::Star,
            Topology::Path,
        ] {
            for n in 2..8 {
                let g = CommGraph::new(t.clone(), n).unwrap();
                let l = g.laplacian();
                for i in 0..n {
                    assert_eq!(l.row(i).sum(), 0.0);
                    assert_eq!(l.column(i).sum(), 0.0);
                }
                assert_eq!(l, &l.transpose());
                assert!(g.algebraic_connectivity() > 1e-9);
            }
        }
    }
}
