use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};

/// Sparse symmetric nonnegative affinities with zero diagonal. The graph
/// Laplacian `L = D - W` is never formed explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    neighbors: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
}

impl AffinityGraph {
    /// From adjacency lists; every edge must appear in both directions with
    /// the same weight.
    pub fn from_adjacency(neighbors: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = neighbors.len();
        for (i, list) in neighbors.iter().enumerate() {
            for &(j, w) in list {
                if j >= n {
                    return Err(Error::invalid(format!("edge ({i}, {j}) out of range")));
                }
                if j == i {
                    return Err(Error::invalid("affinity graph must have zero diagonal"));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::invalid("affinities must be finite and nonnegative"));
                }
                let back = neighbors[j].iter().find(|(m, _)| *m == i).map(|(_, w)| *w);
                if back != Some(w) {
                    return Err(Error::invalid(format!(
                        "affinity ({i}, {j}) is not symmetric"
                    )));
                }
            }
        }
        let degree = neighbors
            .iter()
            .map(|l| l.iter().map(|(_, w)| w).sum())
            .collect();
        Ok(Self { neighbors, degree })
    }

    pub fn from_dense(w: &DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::invalid("affinity matrix must be square"));
        }
        let neighbors = (0..w.nrows())
            .map(|i| {
                (0..w.ncols())
                    .filter(|&j| w[(i, j)] != 0.0)
                    .map(|j| (j, w[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_adjacency(neighbors)
    }

    /// Symmetrized k-nearest-neighbor graph with Gaussian weights: `n` and
    /// `m` are joined if either is among the other's `k` nearest points.
    pub fn knn_gaussian(data: &DataSet, k: usize, sigma: f64) -> Result<Self> {
        let builder = GraphBuilder::new(data.clone(), k, sigma)?;
        let n = data.len();
        let lists: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| builder.neighbors_of(data.point(i), Some(i)))
            .collect();
        let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, list) in lists.into_iter().enumerate() {
            for (j, w) in list {
                neighbors[i].push((j, w));
                neighbors[j].push((i, w));
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|e| e.0);
            list.dedup_by(|a, b| a.0 == b.0);
        }
        Self::from_adjacency(neighbors)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, n: usize) -> &[(usize, f64)] {
        &self.neighbors[n]
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// `L Z` for an `N x K` matrix.
    pub fn laplacian_times(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(z.nrows(), z.ncols());
        for (n, list) in self.neighbors.iter().enumerate() {
            for k in 0..z.ncols() {
                let mut acc = self.degree[n] * z[(n, k)];
                for &(m, w) in list {
                    acc -= w * z[(m, k)];
                }
                out[(n, k)] = acc;
            }
        }
        out
    }

    /// `trace(Z^T L Z)`.
    pub fn trace_form(&self, z: &DMatrix<f64>) -> f64 {
        z.component_mul(&self.laplacian_times(z)).sum()
    }

    /// `(1/2) sum_{n,m} w_nm ||z_n - z_m||^2`, equal to [`Self::trace_form`].
    pub fn pairwise_form(&self, z: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for (n, list) in self.neighbors.iter().enumerate() {
            for &(m, w) in list {
                let d: f64 = (0..z.ncols())
                    .map(|k| (z[(n, k)] - z[(m, k)]).powi(2))
                    .sum();
                total += w * d;
            }
        }
        0.5 * total
    }

    /// Gershgorin bound `2 max_n d_n` on the largest Laplacian eigenvalue.
    pub fn laplacian_bound(&self) -> f64 {
        2.0 * self.degree.iter().copied().fold(0.0, f64::max)
    }
}

/// Gaussian kNN affinities of arbitrary points to a fixed training set.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    data: DataSet,
    k: usize,
    sigma: f64,
}

impl GraphBuilder {
    pub fn new(data: DataSet, k: usize, sigma: f64) -> Result<Self> {
        if k == 0 || k >= data.len() {
            return Err(Error::invalid(format!(
                "neighbor count must be in 1..{}, got {k}",
                data.len()
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {sigma}"
            )));
        }
        Ok(Self { data, k, sigma })
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    /// The `k` nearest training points of `x` (skipping `exclude`) with
    /// their Gaussian affinities. Ties go to the lower index.
    pub fn neighbors_of(&self, x: &[f64], exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut dists: Vec<(usize, f64)> = self
            .data
            .iter()
            .enumerate()
            .filter(|(m, _)| Some(*m) != exclude)
            .map(|(m, p)| (m, sq_dist(x, p)))
            .collect();
        let k = self.k.min(dists.len());
        let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
            dists.truncate(k);
        }
        dists.sort_by(cmp);
        let s2 = self.sigma * self.sigma;
        dists
            .into_iter()
            .map(|(m, d2)| (m, (-0.5 * d2 / s2).exp()))
            .collect()
    }
}
