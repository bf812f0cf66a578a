//! Blurring mean-shift: the dataset itself is replaced by its mean-shifted
//! version at every iteration, `X <- X phi(P)` with `P` the column-stochastic
//! random-walk matrix of Gaussian posteriors.
//!
//! Stopping uses the dataset entropy `H = -sum_m pi_m log p(x_m)` under the
//! normalized Gaussian KDE of the current points; iteration stops once
//! `|H_t - H_{t-1}| <= entropy_tol |H_t|`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::components::{cc_tight, Euclidean};
use crate::data::{log_sum_exp, DataSet};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::mode_seek::Clustering;

/// A dataset whose points may stand for several merged original points.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataSet {
    points: DMatrix<f64>,
    weights: Vec<f64>,
    multiplicity: Vec<usize>,
    /// Original point index -> current representative index.
    origin: Vec<usize>,
}

impl WeightedDataSet {
    pub fn from_dataset(data: &DataSet) -> Self {
        let n = data.len();
        Self {
            points: data.matrix().clone(),
            weights: vec![1.0 / n as f64; n],
            multiplicity: vec![1; n],
            origin: (0..n).collect(),
        }
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, m: usize) -> &[f64] {
        let d = self.dim();
        &self.points.as_slice()[m * d..(m + 1) * d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn original_len(&self) -> usize {
        self.origin.len()
    }

    pub fn to_dataset(&self) -> Result<DataSet> {
        DataSet::new(self.points.clone())
    }

    /// Largest pairwise distance between current points.
    pub fn diameter(&self) -> f64 {
        let m = self.len();
        let mut best: f64 = 0.0;
        for a in 0..m {
            for b in a + 1..m {
                best = best.max(crate::data::sq_dist(self.point(a), self.point(b)));
            }
        }
        best.sqrt()
    }

    /// Collapses points closer than `eps` into single representatives at
    /// their weighted mean. Weights and multiplicities add up.
    pub fn merge(&self, eps: f64) -> Result<Self> {
        let cc = cc_tight(&self.to_dataset()?, &Euclidean, eps)?;
        let k = cc.num_components();
        let d = self.dim();
        let mut sums = DMatrix::zeros(d, k);
        let mut weights = vec![0.0; k];
        let mut multiplicity = vec![0; k];
        for (m, &c) in cc.labels.iter().enumerate() {
            let w = self.weights[m];
            for (s, v) in sums.column_mut(c).iter_mut().zip(self.point(m)) {
                *s += w * v;
            }
            weights[c] += w;
            multiplicity[c] += self.multiplicity[m];
        }
        for (c, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                sums.column_mut(c).scale_mut(1.0 / w);
            } else {
                let rep = cc.representatives[c];
                sums.column_mut(c).copy_from_slice(self.point(rep));
            }
        }
        let origin = self.origin.iter().map(|&m| cc.labels[m]).collect();
        Ok(Self {
            points: sums,
            weights,
            multiplicity,
            origin,
        })
    }
}

/// Spectral filter `phi(P) = (1 - eta) I + eta P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSpec {
    Standard,
    /// Converges for `0 < eta < 2`.
    ExplicitMix(f64),
}

impl FilterSpec {
    pub fn eta(self) -> f64 {
        match self {
            FilterSpec::Standard => 1.0,
            FilterSpec::ExplicitMix(eta) => eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmsConfig {
    pub entropy_tol: f64,
    pub max_iter: usize,
    /// `None` uses `0.01 sigma`.
    pub merge_eps: Option<f64>,
}

impl Default for BmsConfig {
    fn default() -> Self {
        Self {
            entropy_tol: 1e-4,
            max_iter: 500,
            merge_eps: None,
        }
    }
}

impl BmsConfig {
    pub fn merge_eps_for(&self, sigma: f64) -> f64 {
        self.merge_eps.unwrap_or(0.01 * sigma)
    }

    fn validate(&self, sigma: f64) -> Result<()> {
        check_sigma(sigma)?;
        if !(self.entropy_tol > 0.0 && self.entropy_tol.is_finite()) {
            return Err(Error::invalid("entropy tolerance must be positive"));
        }
        if let Some(eps) = self.merge_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid("merge eps must be positive"));
            }
        }
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "bandwidth must be positive and finite, got {sigma}"
        )))
    }
}

fn model_of(data: &WeightedDataSet, sigma: f64) -> Result<KdeModel> {
    KdeModel::gaussian(data.to_dataset()?, sigma)?.with_weights(data.weights.clone())
}

/// One synchronous blurring step. Column `m` of `P` holds the posteriors
/// `p(n | x_m)` with priors `pi_n`.
pub fn bms_step(data: &WeightedDataSet, sigma: f64, filter: FilterSpec) -> Result<WeightedDataSet> {
    check_sigma(sigma)?;
    let eta = filter.eta();
    if !eta.is_finite() {
        return Err(Error::invalid("filter step size must be finite"));
    }
    let model = model_of(data, sigma)?;
    let d = data.dim();
    let columns: Vec<Vec<f64>> = (0..data.len())
        .into_par_iter()
        .map(|m| {
            let post = model.posteriors(data.point(m))?;
            let mut shifted = vec![0.0; d];
            for (n, p) in post.iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for (s, v) in shifted.iter_mut().zip(data.point(n)) {
                    *s += p * v;
                }
            }
            Ok(match filter {
                FilterSpec::Standard => shifted,
                FilterSpec::ExplicitMix(_) => shifted
                    .iter()
                    .zip(data.point(m))
                    .map(|(s, x)| (1.0 - eta) * x + eta * s)
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = columns.into_iter().flatten().collect();
    Ok(WeightedDataSet {
        points: DMatrix::from_vec(d, data.len(), flat),
        ..data.clone()
    })
}

/// Contraction factor of the standard deviation of a Gaussian cloud after
/// one blurring step.
pub fn gaussian_shrink_rate(s: f64, sigma: f64) -> Result<f64> {
    if !(s > 0.0 && sigma > 0.0) {
        return Err(Error::invalid(
            "standard deviation and bandwidth must be positive",
        ));
    }
    Ok(1.0 / (1.0 + (sigma / s).powi(2)))
}

/// `-sum_m pi_m log p(x_m)` under the normalized Gaussian KDE of the dataset.
pub fn dataset_entropy(data: &WeightedDataSet, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let d = data.dim() as f64;
    let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let log_w: Vec<f64> = data.weights.iter().map(|w| w.ln()).collect();
    let entropy = (0..data.len())
        .into_par_iter()
        .map(|m| {
            let logs: Vec<f64> = (0..data.len())
                .map(|n| {
                    log_w[n]
                        - 0.5 * crate::data::sq_dist(data.point(m), data.point(n)) / (sigma * sigma)
                })
                .collect();
            -data.weights[m] * (log_sum_exp(&logs) + log_norm)
        })
        .sum();
    Ok(entropy)
}

#[derive(Debug, Clone)]
pub struct BmsOutput {
    pub clustering: Clustering,
    pub iterations: usize,
    /// False when `max_iter` ran out before the entropy settled.
    pub converged: bool,
    pub entropy: Vec<f64>,
    pub final_data: WeightedDataSet,
}

/// Plain blurring mean-shift followed by a connected-components merge.
pub fn bms_cluster(
    data: &DataSet,
    sigma: f64,
    cfg: &BmsConfig,
    filter: FilterSpec,
) -> Result<BmsOutput> {
    run_bms(data, sigma, cfg, filter, false)
}

/// Blurring mean-shift that merges points closer than `eps` into weighted
/// representatives after every step.
pub fn bms_cluster_accelerated(data: &DataSet, sigma: f64, cfg: &BmsConfig) -> Result<BmsOutput> {
    run_bms(data, sigma, cfg, FilterSpec::Standard, true)
}

fn run_bms(
    data: &DataSet,
    sigma: f64,
    cfg: &BmsConfig,
    filter: FilterSpec,
    merge_each_step: bool,
) -> Result<BmsOutput> {
    cfg.validate(sigma)?;
    let eps = cfg.merge_eps_for(sigma);
    let mut current = WeightedDataSet::from_dataset(data);
    let mut entropy = vec![dataset_entropy(&current, sigma)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        current = bms_step(&current, sigma, filter)?;
        if merge_each_step {
            current = current.merge(eps)?;
        }
        let h = dataset_entropy(&current, sigma)?;
        let prev = *entropy.last().expect("entropy history starts non-empty");
        entropy.push(h);
        if (h - prev).abs() <= cfg.entropy_tol * h.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("blurring mean-shift stopped at max_iter = {}", cfg.max_iter);
    }
    let merged = current.merge(eps)?;
    let labels = merged.origin.clone();
    let centers = (0..merged.len())
        .map(|k| merged.point(k).to_vec())
        .collect();
    Ok(BmsOutput {
        clustering: Clustering {
            labels,
            centers,
            soft: None,
        },
        iterations,
        converged,
        entropy,
        final_data: current,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationOutcome {
    /// Diameter fell below `eps`.
    Collapsed,
    /// Diameter grew beyond ten times its initial value.
    Diverged,
    MaxIter,
}

/// Iterates a filtered blurring step without merging, tracking the diameter.
/// An unstable filter amplifies the spread until the affinities weaken, so
/// divergence shows up as sustained growth rather than overflow.
pub fn bms_iterate(
    data: &DataSet,
    sigma: f64,
    filter: FilterSpec,
    max_iter: usize,
    eps: f64,
) -> Result<(IterationOutcome, usize)> {
    check_sigma(sigma)?;
    let mut current = WeightedDataSet::from_dataset(data);
    let start = current.diameter();
    for it in 1..=max_iter {
        current = bms_step(&current, sigma, filter)?;
        let diam = current.diameter();
        if diam < eps {
            return Ok((IterationOutcome::Collapsed, it));
        }
        if !diam.is_finite() || diam > 10.0 * start.max(eps) {
            return Ok((IterationOutcome::Diverged, it));
        }
    }
    Ok((IterationOutcome::MaxIter, max_iter))
}
