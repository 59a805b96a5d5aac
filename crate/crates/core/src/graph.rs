//! Areal adjacency structures and CAR precision matrices.
//!
//! Regions are dense 0-based indices. Every region must have at least one
//! neighbour: the CAR conditionals divide by the degree.

use crate::error::{Result, SsipError};
use nalgebra::DMatrix;
use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

/// Symmetric, loop-free neighbourhood graph over `n_regions` areal units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Rook (4-neighbour) adjacency on a `rows × cols` lattice. Cell `(r, c)`
    /// has index `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(SsipError::InvalidGraph(format!(
                "grid {rows}x{cols} needs at least two cells"
            )));
        }
        let mut edges = Vec::with_capacity(2 * rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges)
    }

    /// Builds a graph from undirected edges. Each unordered pair may appear
    /// once; self-loops, out-of-range indices and isolated regions are errors.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(SsipError::InvalidGraph("graph has no regions".into()));
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(i, k) in edges {
            if i >= n || k >= n {
                return Err(SsipError::InvalidGraph(format!(
                    "edge ({i}, {k}) out of range for {n} regions"
                )));
            }
            if i == k {
                return Err(SsipError::InvalidGraph(format!("self-loop at region {i}")));
            }
            if !sets[i].insert(k) || !sets[k].insert(i) {
                return Err(SsipError::InvalidGraph(format!("duplicate edge ({i}, {k})")));
            }
        }
        if let Some(i) = sets.iter().position(BTreeSet::is_empty) {
            return Err(SsipError::InvalidGraph(format!("region {i} has no neighbours")));
        }
        Ok(Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Parses a whitespace-separated edge list (`i k` per line, `#` starts a
    /// comment). The region count is `n` if given, else one past the largest
    /// index seen.
    pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| SsipError::Parse {
                    line: lineno + 1,
                    message: "expected two region indices".into(),
                })?
                .parse()
                .map_err(|e| SsipError::Parse {
                    line: lineno + 1,
                    message: format!("bad region index: {e}"),
                })
            };
            let mut toks = line.split_whitespace();
            let i = parse(toks.next())?;
            let k = parse(toks.next())?;
            if toks.next().is_some() {
                return Err(SsipError::Parse {
                    line: lineno + 1,
                    message: "trailing tokens after edge".into(),
                });
            }
            edges.push((i, k));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(i, k)| i.max(k) + 1).max().unwrap_or(0));
        Self::from_edges(n, &edges)
    }

    pub fn read_edge_list(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text, n)
    }

    pub fn n_regions(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(i, k)` with `i < k`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&k| k > i).map(move |&k| (i, k)))
    }

    /// Sum of `field` over the neighbours of `i`.
    pub fn neighbor_sum(&self, field: &[f64], i: usize) -> f64 {
        debug_assert_eq!(field.len(), self.n_regions());
        self.neighbors[i].iter().map(|&k| field[k]).sum()
    }

    /// Like [`neighbor_sum`](Self::neighbor_sum) over column `j` of a
    /// row-major `n_regions × p` array.
    pub fn neighbor_sum_strided(&self, values: &[f64], p: usize, i: usize, j: usize) -> f64 {
        self.neighbors[i].iter().map(|&k| values[k * p + j]).sum()
    }

    /// Component label per region and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n_regions();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for &k in &self.neighbors[i] {
                    if label[k] == usize::MAX {
                        label[k] = count;
                        queue.push_back(k);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.components().1 == 1
    }

    /// `Q = D − ρW`.
    pub fn car_precision(&self, rho: f64) -> Result<CarPrecision> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(SsipError::InvalidConfig(format!("rho = {rho} outside [0, 1]")));
        }
        let rows = self
            .neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut row = Vec::with_capacity(nb.len() + 1);
                row.push((i, nb.len() as f64));
                row.extend(nb.iter().map(|&k| (k, -rho)));
                row.sort_by_key(|&(k, _)| k);
                row
            })
            .collect();
        Ok(CarPrecision { rho, rows })
    }
}

/// Sparse symmetric CAR precision, stored row-wise with the diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct CarPrecision {
    rho: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl CarPrecision {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&k, |&(c, _)| c)
            .map(|pos| self.rows[i][pos].1)
            .unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, q)| q * x[k]).sum())
            .collect()
    }

    /// `xᵀ Q x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(x)
            .map(|(row, xi)| xi * row.iter().map(|&(k, q)| q * x[k]).sum::<f64>())
            .sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, q) in row {
                m[(i, k)] = q;
            }
        }
        m
    }
}
