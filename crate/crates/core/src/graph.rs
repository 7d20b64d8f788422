//! Weighted undirected qubit networks.
//!
//! Indices are 0-based in the API. Edge-list files and CLI output use
//! 1-based indices.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    n: usize,
    weights: Vec<f64>,
}

impl Topology {
    /// Builds a topology from 0-based `(i, j, weight)` edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewNodes { min: 2, got: n });
        }
        let mut t = Topology {
            n,
            weights: vec![0.0; n * n],
        };
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeight { i, j, weight: w });
            }
            t.weights[i * n + j] = w;
            t.weights[j * n + i] = w;
        }
        Ok(t)
    }

    /// Path `0 - 1 - ... - (n-1)` with unit weights.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewNodes { min: 2, got: n });
        }
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    /// `side × side` 4-neighbor lattice, row-major node order.
    pub fn grid(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::TooFewNodes { min: 2, got: side });
        }
        let mut edges = Vec::with_capacity(2 * side * (side - 1));
        for r in 0..side {
            for c in 0..side {
                let k = r * side + c;
                if c + 1 < side {
                    edges.push((k, k + 1, 1.0));
                }
                if r + 1 < side {
                    edges.push((k, k + side, 1.0));
                }
            }
        }
        Self::from_edges(side * side, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Parses `i j [weight]` lines with 1-based indices. Blank lines and
    /// `#` comments are skipped; the node count is the largest index seen.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::EdgeListParse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(parse_err(format!(
                    "expected `i j [weight]`, found {} fields",
                    fields.len()
                )));
            }
            let index = |s: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| parse_err(format!("invalid node index `{s}`")))?;
                if v == 0 {
                    return Err(parse_err("node indices are 1-based".into()));
                }
                Ok(v - 1)
            };
            let i = index(fields[0])?;
            let j = index(fields[1])?;
            let w = match fields.get(2) {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("invalid weight `{s}`")))?,
                None => 1.0,
            };
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidWeight {
                    i: i + 1,
                    j: j + 1,
                    weight: w,
                });
            }
            if edges.iter().any(|&(a, b, _)| (a, b) == (i, j) || (a, b) == (j, i)) {
                return Err(parse_err(format!("duplicate edge ({}, {})", i + 1, j + 1)));
            }
            n = n.max(i + 1).max(j + 1);
            edges.push((i, j, w));
        }
        Self::from_edges(n, &edges)
    }

    pub fn load_edge_list(path: &Path) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Positive-weight neighbors of node `i` in increasing index order.
    pub fn neighbors(&self, i: usize) -> Result<Vec<(usize, f64)>> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { index: i, n: self.n });
        }
        Ok(self.neighbors_unchecked(i).collect())
    }

    pub(crate) fn neighbors_unchecked(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = &self.weights[i * self.n..(i + 1) * self.n];
        row.iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, w)| (j, *w))
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let w = self.weight(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.neighbors_unchecked(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// True when the edges are exactly `(i, i+1)` in index order.
    pub fn is_chain(&self) -> bool {
        (0..self.n).all(|i| {
            (0..self.n).all(|j| {
                let adjacent = i.abs_diff(j) == 1;
                (self.weight(i, j) > 0.0) == adjacent
            })
        })
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.neighbors_unchecked(i).map(|(_, w)| w).sum()
            } else {
                -self.weight(i, j)
            }
        })
    }

    /// Second-smallest Laplacian eigenvalue.
    pub fn algebraic_connectivity(&self) -> f64 {
        let mut eig = SymmetricEigen::new(self.laplacian()).eigenvalues.as_slice().to_vec();
        eig.sort_by(f64::total_cmp);
        eig[1]
    }

    /// SHA-256 over the node count and the canonical edge list.
    pub fn hash(&self) -> String {
        let mut text = format!("n={}\n", self.n);
        for (i, j, w) in self.edges() {
            let _ = writeln!(text, "{i} {j} {:016x}", w.to_bits());
        }
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_structure(t: &Topology) {
        for i in 0..t.n() {
            assert_eq!(t.weight(i, i), 0.0);
            for j in 0..t.n() {
                assert_eq!(t.weight(i, j), t.weight(j, i));
                assert!(t.weight(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn chain_examples() {
        let t = Topology::chain(2).unwrap();
        assert_eq!(t.edges(), vec![(0, 1, 1.0)]);
        let t = Topology::chain(5).unwrap();
        assert_eq!(t.edges().len(), 4);
        assert!(t.is_connected() && t.is_chain());
        check_structure(&t);
        assert!(matches!(Topology::chain(1), Err(Error::TooFewNodes { .. })));
    }

    #[test]
    fn grid_examples() {
        let t = Topology::grid(3).unwrap();
        assert_eq!((t.n(), t.edges().len()), (9, 12));
        let t2 = Topology::grid(2).unwrap();
        assert_eq!((t2.n(), t2.edges().len()), (4, 4));
        assert_eq!(Topology::grid(10).unwrap().n(), 100);
        assert!(t.is_connected() && !t.is_chain());
        check_structure(&t);
        assert!(Topology::grid(1).is_err());
    }

    #[test]
    fn neighbor_examples() {
        let t = Topology::chain(3).unwrap();
        assert_eq!(t.neighbors(1).unwrap(), vec![(0, 1.0), (2, 1.0)]);
        assert_eq!(t.neighbors(0).unwrap(), vec![(1, 1.0)]);
        assert_eq!(Topology::grid(3).unwrap().neighbors(4).unwrap().len(), 4);
        assert!(matches!(t.neighbors(3), Err(Error::NodeOutOfRange { index: 3, n: 3 })));
    }

    #[test]
    fn connectivity() {
        let split = Topology::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!split.is_connected());
        assert!(Topology::complete(4).unwrap().is_connected());
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert!(matches!(Topology::from_edges(3, &[(0, 0, 1.0)]), Err(Error::SelfLoop(0))));
        assert!(matches!(
            Topology::from_edges(3, &[(0, 1, -1.0)]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            Topology::from_edges(3, &[(0, 5, 1.0)]),
            Err(Error::NodeOutOfRange { index: 5, .. })
        ));
    }

    #[test]
    fn edge_list_parsing() {
        let t = Topology::parse_edge_list("# ring\n1 2 0.5\n2 3\n\n3 1 2 # closing\n").unwrap();
        assert_eq!(t.n(), 3);
        assert_eq!(t.weight(0, 1), 0.5);
        assert_eq!(t.weight(1, 2), 1.0);
        assert_eq!(t.weight(2, 0), 2.0);
        for bad in ["0 1 1", "1 x 1", "1 2 3 4", "1 2 -1", "1 2\n2 1"] {
            assert!(Topology::parse_edge_list(bad).is_err(), "{bad}");
        }
        let err = Topology::parse_edge_list("1 2\nfoo bar\n").unwrap_err();
        assert!(matches!(err, Error::EdgeListParse { line: 2, .. }));
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let l = Topology::grid(3).unwrap().laplacian();
        for r in 0..9 {
            assert!(l.row(r).sum().abs() < 1e-15);
        }
        assert_eq!(l[(4, 4)], 4.0);
    }

    #[test]
    fn algebraic_connectivity_chain_below_grid() {
        // Path P_n has λ₂ = 2(1 − cos(π/n)).
        let chain = Topology::chain(4).unwrap();
        let expected = 2.0 * (1.0 - (std::f64::consts::PI / 4.0).cos());
        assert!((chain.algebraic_connectivity() - expected).abs() < 1e-12);
        for m in 2..=4 {
            let grid = Topology::grid(m).unwrap().algebraic_connectivity();
            let chain = Topology::chain(m * m).unwrap().algebraic_connectivity();
            assert!(chain < grid, "m={m}: chain {chain} vs grid {grid}");
        }
    }

    #[test]
    fn hash_is_stable_and_discriminating() {
        let a = Topology::chain(5).unwrap().hash();
        assert_eq!(a, Topology::chain(5).unwrap().hash());
        assert_ne!(a, Topology::chain(6).unwrap().hash());
        assert_eq!(a.len(), 64);
    }
}
