//! K-modes clustering and its Laplacian-regularized soft variant.
//!
//! K-modes maximizes `(1/N) sum_n G(||(x_n - c_{k(n)}) / sigma||^2)` with `G`
//! the Gaussian profile, alternating a nearest-centroid assignment with a
//! mean-shift ascent of each centroid on the KDE of its own cluster. Training
//! follows a homotopy that starts at `sigma = infinity` (plain K-means) and
//! decreases `sigma` to the target value.

mod graph;
mod laplacian;

pub use graph::{AffinityGraph, GraphBuilder};
pub use laplacian::{
    lap_kmodes_assignment_step, lap_kmodes_fit, lap_kmodes_objective, lap_kmodes_out_of_sample,
    AssignmentOutcome, LapKmodesConfig, LapKmodesFit, OutOfSampleSoft, StageScale,
};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::mode_seek::{ascend_to_mode, MsConfig};

/// Hard assignment of each point to exactly one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl HardAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {k} clusters"
            )));
        }
        Ok(Self { labels, k })
    }

    /// From a binary `N x K` matrix whose rows each contain a single one.
    pub fn from_matrix(z: &DMatrix<f64>) -> Result<Self> {
        let mut labels = Vec::with_capacity(z.nrows());
        for (n, row) in z.row_iter().enumerate() {
            let ones: Vec<usize> = (0..z.ncols()).filter(|&k| row[k] == 1.0).collect();
            if ones.len() != 1 || row.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::invalid(format!(
                    "row {n} is not a one-hot assignment"
                )));
            }
            labels.push(ones[0]);
        }
        Self::new(labels, z.ncols())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.labels.len(), self.k);
        for (n, &l) in self.labels.iter().enumerate() {
            z[(n, l)] = 1.0;
        }
        z
    }
}

/// Soft assignments: an `N x K` matrix with rows on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    z: DMatrix<f64>,
}

impl SoftAssignment {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        for (n, row) in z.row_iter().enumerate() {
            if row.iter().any(|v| *v < 0.0 || !v.is_finite()) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "row {n} is not on the probability simplex"
                )));
            }
        }
        Ok(Self { z })
    }

    pub(crate) fn new_unchecked(z: DMatrix<f64>) -> Self {
        Self { z }
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            z: DMatrix::from_element(n, k, 1.0 / k as f64),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// Largest entry of each row, ties to the lowest index.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.z
            .row_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect()
    }
}

impl From<&HardAssignment> for SoftAssignment {
    fn from(h: &HardAssignment) -> Self {
        Self { z: h.to_matrix() }
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Decreasing bandwidths following the initial K-means stage.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopySchedule {
    sigmas: Vec<f64>,
}

impl HomotopySchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(
                "schedule bandwidths must be positive and finite",
            ));
        }
        if sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid(
                "schedule bandwidths must be strictly decreasing",
            ));
        }
        Ok(Self { sigmas })
    }

    /// Only the K-means stage.
    pub fn kmeans_only() -> Self {
        Self { sigmas: Vec::new() }
    }

    /// `stages` geometrically spaced values from `start` down to `end`.
    pub fn geometric(start: f64, end: f64, stages: usize) -> Result<Self> {
        if stages == 0 {
            return Ok(Self::kmeans_only());
        }
        if stages == 1 || start <= end {
            return Self::new(vec![end]);
        }
        let ratio = (end / start).powf(1.0 / (stages - 1) as f64);
        let mut sigmas: Vec<f64> = (0..stages).map(|i| start * ratio.powi(i as i32)).collect();
        *sigmas.last_mut().expect("stages > 1") = end;
        Self::new(sigmas)
    }

    /// Ten stages from the data diameter down to `sigma`.
    pub fn default_for(data: &DataSet, sigma: f64) -> Result<Self> {
        Self::geometric(data.diameter(), sigma, 10)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmodesConfig {
    pub max_rounds: usize,
    /// Tolerance of the per-cluster mean-shift centroid updates.
    pub ms_tol: f64,
    pub seed: u64,
    /// Starting centroids; `None` uses k-means++ seeding.
    pub init: Option<Vec<Vec<f64>>>,
}

impl Default for KmodesConfig {
    fn default() -> Self {
        Self {
            max_rounds: 100,
            ms_tol: 1e-8,
            seed: 0,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmodesFit {
    pub assignment: HardAssignment,
    pub centers: Vec<Vec<f64>>,
    /// Objective after each round of each finite-bandwidth stage.
    pub objective_trace: Vec<(f64, f64)>,
}

/// `(1/N) sum_n G(||(x_n - c_{k(n)}) / sigma||^2)`.
pub fn kmodes_objective(
    data: &DataSet,
    assignment: &HardAssignment,
    centers: &[Vec<f64>],
    sigma: f64,
) -> Result<f64> {
    check_shapes(data, assignment.labels.len(), assignment.k, centers)?;
    let total: f64 = assignment
        .labels
        .iter()
        .enumerate()
        .map(|(n, &k)| gaussian_similarity(data.point(n), &centers[k], sigma))
        .sum();
    Ok(total / data.len() as f64)
}

pub(crate) fn check_shapes(data: &DataSet, n: usize, k: usize, centers: &[Vec<f64>]) -> Result<()> {
    if n != data.len() {
        return Err(Error::invalid(format!(
            "assignment has {n} rows for {} points",
            data.len()
        )));
    }
    if centers.len() != k {
        return Err(Error::invalid(format!(
            "{} centers for {k} clusters",
            centers.len()
        )));
    }
    if let Some(c) = centers.iter().find(|c| c.len() != data.dim()) {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: c.len(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn gaussian_similarity(x: &[f64], c: &[f64], sigma: f64) -> f64 {
    (-0.5 * sq_dist(x, c) / (sigma * sigma)).exp()
}

/// Index of the nearest center, ties to the lowest index.
pub(crate) fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding with a seeded generator.
pub fn kmeans_pp_init(data: &DataSet, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_k(data, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let mut centers = vec![data.point(rng.gen_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = data.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = data.point(pick).to_vec();
        for (d, p) in dist.iter_mut().zip(data.iter()) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    Ok(centers)
}

fn check_k(data: &DataSet, k: usize) -> Result<()> {
    if k == 0 || k > data.len() {
        return Err(Error::invalid(format!(
            "need 1 <= K <= N = {}, got K = {k}",
            data.len()
        )));
    }
    Ok(())
}

pub(crate) fn initial_centers(
    data: &DataSet,
    k: usize,
    init: &Option<Vec<Vec<f64>>>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    match init {
        Some(c) => {
            check_k(data, k)?;
            check_shapes(data, data.len(), k, c)?;
            Ok(c.clone())
        }
        None => kmeans_pp_init(data, k, seed),
    }
}

/// Nearest-center labels. Empty clusters take the point farthest from its
/// nearest center (the one with the lowest best similarity).
pub(crate) fn assign_nearest(data: &DataSet, centers: &mut [Vec<f64>]) -> Vec<usize> {
    let k = centers.len();
    loop {
        let nearest: Vec<(usize, f64)> = (0..data.len())
            .into_par_iter()
            .map(|n| nearest_center(data.point(n), centers))
            .collect();
        let mut counts = vec![0usize; k];
        for (l, _) in &nearest {
            counts[*l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return nearest.into_iter().map(|(l, _)| l).collect();
        };
        // Only points in clusters with more than one member may move.
        let far = (0..data.len())
            .filter(|&n| counts[nearest[n].0] > 1)
            .max_by(|&a, &b| nearest[a].1.total_cmp(&nearest[b].1).then(b.cmp(&a)));
        match far {
            Some(n) => {
                log::debug!("re-seeding empty cluster {empty} at point {n}");
                centers[empty] = data.point(n).to_vec();
            }
            None => return nearest.into_iter().map(|(l, _)| l).collect(),
        }
    }
}

fn cluster_means(data: &DataSet, labels: &[usize], centers: &mut [Vec<f64>]) {
    let d = data.dim();
    let k = centers.len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (n, &l) in labels.iter().enumerate() {
        for (s, v) in sums[l].iter_mut().zip(data.point(n)) {
            *s += v;
        }
        counts[l] += 1;
    }
    for ((c, s), m) in centers.iter_mut().zip(sums).zip(counts) {
        if m > 0 {
            *c = s.into_iter().map(|v| v / m as f64).collect();
        }
    }
}

/// Lloyd iterations from the given centers until the labels stop changing.
pub fn kmeans(
    data: &DataSet,
    init: Vec<Vec<f64>>,
    max_rounds: usize,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    check_k(data, init.len())?;
    check_shapes(data, data.len(), init.len(), &init)?;
    let mut centers = init;
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..max_rounds.max(1) {
        let next = assign_nearest(data, &mut centers);
        let stable = next == labels;
        labels = next;
        cluster_means(data, &labels, &mut centers);
        if stable {
            break;
        }
    }
    Ok((labels, centers))
}

/// Mode of the KDE of the points with the given weights, reached by
/// mean-shift from `start`.
pub(crate) fn weighted_mode(
    data: &DataSet,
    weights: Vec<f64>,
    sigma: f64,
    start: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let model = KdeModel::gaussian(data.clone(), sigma)?.with_weights(weights)?;
    let cfg = MsConfig {
        tol,
        ..MsConfig::default()
    };
    ascend_to_mode(&model, start, &cfg)
}

fn mode_step(
    data: &DataSet,
    labels: &[usize],
    centers: &mut [Vec<f64>],
    sigma: f64,
    tol: f64,
) -> Result<()> {
    let updated: Vec<Option<Vec<f64>>> = (0..centers.len())
        .into_par_iter()
        .map(|k| {
            let members: Vec<usize> = (0..labels.len()).filter(|&n| labels[n] == k).collect();
            if members.is_empty() {
                return Ok(None);
            }
            let sub = DataSet::from_rows(
                &members
                    .iter()
                    .map(|&n| data.point(n).to_vec())
                    .collect::<Vec<_>>(),
            )?;
            let w = vec![1.0; members.len()];
            weighted_mode(&sub, w, sigma, &centers[k], tol).map(Some)
        })
        .collect::<Result<_>>()?;
    for (c, u) in centers.iter_mut().zip(updated) {
        if let Some(u) = u {
            *c = u;
        }
    }
    Ok(())
}

/// K-modes with homotopy: a K-means stage followed by alternating
/// assignment and per-cluster mean-shift at each scheduled bandwidth.
pub fn kmodes_fit(
    data: &DataSet,
    k: usize,
    schedule: &HomotopySchedule,
    cfg: &KmodesConfig,
) -> Result<KmodesFit> {
    if cfg.ms_tol.is_nan() || cfg.ms_tol <= 0.0 {
        return Err(Error::invalid("mean-shift tolerance must be positive"));
    }
    let init = initial_centers(data, k, &cfg.init, cfg.seed)?;
    let (mut labels, mut centers) = kmeans(data, init, cfg.max_rounds)?;
    let mut objective_trace = Vec::new();
    for &sigma in schedule.sigmas() {
        for _ in 0..cfg.max_rounds.max(1) {
            let next = assign_nearest(data, &mut centers);
            let stable = next == labels;
            labels = next;
            mode_step(data, &labels, &mut centers, sigma, cfg.ms_tol)?;
            let a = HardAssignment {
                labels: labels.clone(),
                k,
            };
            objective_trace.push((sigma, kmodes_objective(data, &a, &centers, sigma)?));
            if stable {
                break;
            }
        }
    }
    Ok(KmodesFit {
        assignment: HardAssignment { labels, k },
        centers,
        objective_trace,
    })
}

/// Euclidean projection onto `{z >= 0, sum z = 1}` by sorting.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    simplex_project_in_place(&mut out, &mut Vec::with_capacity(v.len()));
    out
}

/// [`simplex_project`] overwriting `v`, with `sorted` as scratch space.
pub(crate) fn simplex_project_in_place(v: &mut [f64], sorted: &mut Vec<f64>) {
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, uj) in sorted.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
