//! Manifold blurring mean-shift: each point moves by its Gaussian
//! mean-shift vector with the component inside its local tangent space
//! removed, so points collapse onto the manifold without drifting along it.
//!
//! The tangent space of `x_n` is spanned by the top `L` principal directions
//! of `x_n` and its `k` nearest neighbors, recomputed at every iteration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::mode_seek::ms_step;

#[derive(Debug, Clone, PartialEq)]
pub struct MbmsConfig {
    pub sigma: f64,
    pub k: usize,
    /// Tangent space dimension; zero gives plain blurring mean-shift.
    pub tangent_dim: usize,
    pub max_iter: usize,
    /// Stop once the mean normal-to-tangent eigenvalue ratio falls below this.
    pub stop_ratio: f64,
}

impl MbmsConfig {
    pub fn new(sigma: f64, k: usize, tangent_dim: usize) -> Self {
        Self {
            sigma,
            k,
            tangent_dim,
            max_iter: 5,
            stop_ratio: 0.01,
        }
    }

    fn validate(&self, data: &DataSet) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {}",
                self.sigma
            )));
        }
        if self.tangent_dim >= data.dim() {
            return Err(Error::invalid(format!(
                "tangent dimension {} must be below the data dimension {}",
                self.tangent_dim,
                data.dim()
            )));
        }
        if self.tangent_dim > 0 && self.k < self.tangent_dim + 1 {
            return Err(Error::invalid(
                "neighbor count must be at least tangent dimension + 1",
            ));
        }
        if self.tangent_dim > 0 && self.k > data.len().saturating_sub(1) {
            return Err(Error::invalid(format!(
                "neighbor count {} exceeds N - 1 = {}",
                self.k,
                data.len().saturating_sub(1)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    /// Mean of the neighborhood.
    pub base: Vec<f64>,
    /// `D x L` orthonormal basis.
    pub basis: DMatrix<f64>,
    /// Neighborhood covariance eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    /// The neighborhood spans fewer than `L` directions; the basis was
    /// completed with null-space eigenvectors.
    pub degenerate: bool,
}

impl Tangent {
    /// `(sum of eigenvalues beyond the top L) / (sum of the top L)`.
    pub fn normal_ratio(&self) -> f64 {
        let l = self.basis.ncols();
        let top: f64 = self.eigenvalues[..l].iter().sum();
        let rest: f64 = self.eigenvalues[l..].iter().map(|v| v.max(0.0)).sum();
        if rest <= 0.0 {
            0.0
        } else if top <= 0.0 {
            f64::INFINITY
        } else {
            rest / top
        }
    }

    /// Removes the tangent component of `v`, twice for accuracy.
    pub fn remove_tangential(&self, v: &DVector<f64>) -> DVector<f64> {
        let u = &self.basis;
        let once = v - u * (u.transpose() * v);
        &once - u * (u.transpose() * &once)
    }
}

fn neighborhood(data: &DataSet, n: usize, k: usize) -> Vec<usize> {
    let x = data.point(n);
    let mut d: Vec<(usize, f64)> = (0..data.len())
        .filter(|&m| m != n)
        .map(|m| (m, sq_dist(x, data.point(m))))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    let k = k.min(d.len());
    if k > 0 && k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
    }
    d.truncate(k);
    let mut idx: Vec<usize> = d.into_iter().map(|(m, _)| m).collect();
    idx.push(n);
    idx.sort_unstable();
    idx
}

/// Local PCA on `x_n` and its `k` nearest neighbors.
pub fn local_tangent(data: &DataSet, n: usize, k: usize, tangent_dim: usize) -> Result<Tangent> {
    if n >= data.len() {
        return Err(Error::invalid(format!("point index {n} out of range")));
    }
    if k == 0 || k > data.len().saturating_sub(1) {
        return Err(Error::invalid(format!(
            "neighbor count must be in 1..={}",
            data.len().saturating_sub(1)
        )));
    }
    if tangent_dim >= data.dim() {
        return Err(Error::invalid(
            "tangent dimension must be below the data dimension",
        ));
    }
    let idx = neighborhood(data, n, k);
    let d = data.dim();
    let mut base = DVector::zeros(d);
    for &m in &idx {
        base += DVector::from_column_slice(data.point(m));
    }
    base /= idx.len() as f64;
    let mut cov = DMatrix::zeros(d, d);
    for &m in &idx {
        let diff = DVector::from_column_slice(data.point(m)) - &base;
        cov.ger(1.0 / idx.len() as f64, &diff, &diff, 1.0);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = DMatrix::zeros(d, tangent_dim);
    for (j, &i) in order.iter().take(tangent_dim).enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    let scale = eigenvalues.first().copied().unwrap_or(0.0).abs();
    let degenerate =
        tangent_dim > 0 && eigenvalues[tangent_dim - 1] <= 1e-12 * scale.max(f64::MIN_POSITIVE);
    Ok(Tangent {
        base: base.iter().copied().collect(),
        basis,
        eigenvalues,
        degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct MbmsStep {
    pub data: DataSet,
    pub displacements: Vec<DVector<f64>>,
    pub tangents: Vec<Tangent>,
}

impl MbmsStep {
    pub fn mean_normal_ratio(&self) -> f64 {
        mean_ratio(&self.tangents)
    }
}

fn mean_ratio(tangents: &[Tangent]) -> f64 {
    if tangents.is_empty() {
        return 0.0;
    }
    tangents.iter().map(Tangent::normal_ratio).sum::<f64>() / tangents.len() as f64
}

/// One synchronous MBMS update over all points.
pub fn mbms_step(data: &DataSet, cfg: &MbmsConfig) -> Result<MbmsStep> {
    cfg.validate(data)?;
    let model = KdeModel::gaussian(data.clone(), cfg.sigma)?;
    let results: Vec<(Vec<f64>, DVector<f64>, Tangent)> = (0..data.len())
        .into_par_iter()
        .map(|n| {
            let x = data.point(n);
            let tangent = if cfg.tangent_dim == 0 {
                Tangent {
                    base: x.to_vec(),
                    basis: DMatrix::zeros(data.dim(), 0),
                    eigenvalues: Vec::new(),
                    degenerate: false,
                }
            } else {
                local_tangent(data, n, cfg.k, cfg.tangent_dim)?
            };
            let shifted = ms_step(&model, x)?;
            let (moved, disp) = if cfg.tangent_dim == 0 {
                let disp =
                    DVector::from_iterator(x.len(), shifted.iter().zip(x).map(|(s, v)| s - v));
                (shifted, disp)
            } else {
                let v = DVector::from_iterator(x.len(), shifted.iter().zip(x).map(|(s, v)| s - v));
                let disp = tangent.remove_tangential(&v);
                (
                    x.iter().zip(disp.iter()).map(|(a, b)| a + b).collect(),
                    disp,
                )
            };
            Ok((moved, disp, tangent))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut displacements = Vec::with_capacity(results.len());
    let mut tangents = Vec::with_capacity(results.len());
    for (r, d, t) in results {
        rows.push(r);
        displacements.push(d);
        tangents.push(t);
    }
    Ok(MbmsStep {
        data: DataSet::from_rows(&rows)?,
        displacements,
        tangents,
    })
}

#[derive(Debug, Clone)]
pub struct MbmsOutput {
    pub data: DataSet,
    pub iterations: usize,
    /// Mean normal ratio measured before each step taken.
    pub ratios: Vec<f64>,
}

/// Repeats [`mbms_step`] until the mean normal ratio falls below
/// `stop_ratio` or `max_iter` steps were taken.
pub fn mbms_run(data: &DataSet, cfg: &MbmsConfig) -> Result<MbmsOutput> {
    cfg.validate(data)?;
    let mut current = data.clone();
    let mut ratios = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let step = mbms_step(&current, cfg)?;
        let ratio = step.mean_normal_ratio();
        if cfg.tangent_dim > 0 && ratio < cfg.stop_ratio {
            break;
        }
        ratios.push(ratio);
        current = step.data;
        iterations += 1;
    }
    Ok(MbmsOutput {
        data: current,
        iterations,
        ratios,
    })
}
