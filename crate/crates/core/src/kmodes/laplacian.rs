//! Laplacian K-modes: soft assignments `Z` (rows on the simplex) minimizing
//! `lambda tr(Z^T L Z) - (1/N) sum_{n,k} z_nk G(||(x_n - c_k) / sigma||^2)`.
//!
//! In the `sigma = infinity` stage the similarity term is replaced by its
//! K-means limit `(1/N) sum z_nk ||x_n - c_k||^2 / (2 sigma_0^2)`, with
//! `sigma_0` the first finite bandwidth of the schedule.
//!
//! Out-of-sample points get `z(x) = proj( (zbar(x) + g(x)) / 2 )`, where
//! `zbar` is the affinity-weighted mean of the neighbors' assignments and
//! `g_k = G_k(x) / sum_j G_j(x)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{
    assign_nearest, check_shapes, gaussian_similarity, initial_centers, simplex_project,
    simplex_project_in_place, weighted_mode, AffinityGraph, GraphBuilder, HomotopySchedule,
    SoftAssignment,
};
use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::kde::normalize_log_weights;

/// Bandwidth of a training stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageScale {
    /// K-means limit, with the length scale that weighs it against the
    /// Laplacian term.
    KmeansLimit {
        scale: f64,
    },
    Finite(f64),
}

impl StageScale {
    fn validate(self) -> Result<()> {
        let s = match self {
            StageScale::KmeansLimit { scale } => scale,
            StageScale::Finite(s) => s,
        };
        if s > 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "bandwidth must be positive and finite, got {s}"
            )))
        }
    }

    /// Per-point, per-cluster linear cost `a_nk`.
    fn cost(self, x: &[f64], c: &[f64]) -> f64 {
        match self {
            StageScale::KmeansLimit { scale } => 0.5 * sq_dist(x, c) / (scale * scale),
            StageScale::Finite(sigma) => -gaussian_similarity(x, c, sigma),
        }
    }

    /// Log of the unnormalized centroid term `g_k`.
    fn log_similarity(self, x: &[f64], c: &[f64]) -> f64 {
        match self {
            StageScale::KmeansLimit { scale } => -0.5 * sq_dist(x, c) / (scale * scale),
            StageScale::Finite(sigma) => -0.5 * sq_dist(x, c) / (sigma * sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LapKmodesConfig {
    pub lambda: f64,
    pub max_rounds: usize,
    pub ms_tol: f64,
    pub seed: u64,
    pub init: Option<Vec<Vec<f64>>>,
    /// Independent k-means++ starts (seeds `seed`, `seed + 1`, ...); the run
    /// with the lowest final objective is kept. Ignored with `init`.
    pub restarts: usize,
    pub qp_max_iter: usize,
    /// First-order optimality threshold of the assignment step.
    pub pg_tol: f64,
    /// Relative objective decrease below which a stage ends.
    pub round_tol: f64,
}

impl Default for LapKmodesConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_rounds: 50,
            ms_tol: 1e-8,
            seed: 0,
            init: None,
            restarts: 1,
            qp_max_iter: 20_000,
            pg_tol: 1e-6,
            round_tol: 1e-9,
        }
    }
}

impl LapKmodesConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.ms_tol > 0.0 && self.pg_tol > 0.0 && self.round_tol >= 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

fn cost_matrix(data: &DataSet, centers: &[Vec<f64>], scale: StageScale) -> DMatrix<f64> {
    let n = data.len();
    let k = centers.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            centers
                .iter()
                .map(|c| scale.cost(data.point(i), c) / n as f64)
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, k, |i, j| rows[i][j])
}

fn objective_with_cost(
    z: &DMatrix<f64>,
    cost: &DMatrix<f64>,
    lambda: f64,
    graph: &AffinityGraph,
) -> f64 {
    let smooth = if lambda == 0.0 {
        0.0
    } else {
        lambda * graph.trace_form(z)
    };
    smooth + z.component_mul(cost).sum()
}

fn check_graph(data: &DataSet, graph: &AffinityGraph) -> Result<()> {
    if graph.len() != data.len() {
        return Err(Error::invalid(format!(
            "graph has {} nodes for {} points",
            graph.len(),
            data.len()
        )));
    }
    Ok(())
}

/// Objective value for a finite bandwidth.
pub fn lap_kmodes_objective(
    data: &DataSet,
    z: &SoftAssignment,
    centers: &[Vec<f64>],
    sigma: f64,
    lambda: f64,
    graph: &AffinityGraph,
) -> Result<f64> {
    stage_objective(data, z, centers, StageScale::Finite(sigma), lambda, graph)
}

fn stage_objective(
    data: &DataSet,
    z: &SoftAssignment,
    centers: &[Vec<f64>],
    scale: StageScale,
    lambda: f64,
    graph: &AffinityGraph,
) -> Result<f64> {
    scale.validate()?;
    check_shapes(data, z.len(), z.k(), centers)?;
    check_graph(data, graph)?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    Ok(objective_with_cost(
        z.matrix(),
        &cost_matrix(data, centers, scale),
        lambda,
        graph,
    ))
}

/// Projects each length-`k` row of a row-major buffer onto the simplex.
fn project_rows_in_place(z: &mut [f64], k: usize) {
    let mut sorted = Vec::with_capacity(k);
    for row in z.chunks_exact_mut(k) {
        simplex_project_in_place(row, &mut sorted);
    }
}

/// The assignment QP `lambda tr(Z^T L Z) + <C, Z>` over row-major `N x K`
/// buffers.
struct AssignmentQp<'a> {
    graph: &'a AffinityGraph,
    cost: Vec<f64>,
    k: usize,
    lambda: f64,
    step: f64,
}

impl AssignmentQp<'_> {
    /// Objective at `z`, writing the gradient into `grad`.
    fn value_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.k;
        let degree = self.graph.degree();
        let mut quad = 0.0;
        let mut linear = 0.0;
        for n in 0..degree.len() {
            let row = &z[n * k..(n + 1) * k];
            let out = &mut grad[n * k..(n + 1) * k];
            for j in 0..k {
                out[j] = degree[n] * row[j];
            }
            for &(m, w) in self.graph.neighbors(n) {
                for j in 0..k {
                    out[j] -= w * z[m * k + j];
                }
            }
            for j in 0..k {
                let c = self.cost[n * k + j];
                quad += row[j] * out[j];
                linear += c * row[j];
                out[j] = 2.0 * self.lambda * out[j] + c;
            }
        }
        self.lambda * quad + linear
    }

    /// `||z - proj(z - step grad)|| / step`.
    fn pg_norm(&self, z: &[f64], grad: &[f64], scratch: &mut [f64]) -> f64 {
        for ((s, zi), gi) in scratch.iter_mut().zip(z).zip(grad) {
            *s = zi - self.step * gi;
        }
        project_rows_in_place(scratch, self.k);
        z.iter()
            .zip(scratch.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            / self.step
    }
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(v: &[f64], n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, k, v)
}

#[derive(Debug, Clone)]
pub struct AssignmentOutcome {
    pub z: SoftAssignment,
    pub iterations: usize,
    /// Norm of the projected-gradient mapping at the returned iterate.
    pub pg_norm: f64,
    pub converged: bool,
}

/// Minimizes the objective over `Z` with the centroids fixed, by
/// accelerated projected gradient with row-wise simplex projection and
/// objective-based restarts. Returns the best iterate seen.
pub fn lap_kmodes_assignment_step(
    data: &DataSet,
    centers: &[Vec<f64>],
    scale: StageScale,
    graph: &AffinityGraph,
    z_init: &SoftAssignment,
    cfg: &LapKmodesConfig,
) -> Result<AssignmentOutcome> {
    cfg.validate()?;
    scale.validate()?;
    check_shapes(data, z_init.len(), z_init.k(), centers)?;
    check_graph(data, graph)?;
    let (n, k) = (z_init.len(), z_init.k());
    let qp = AssignmentQp {
        graph,
        cost: to_row_major(&cost_matrix(data, centers, scale)),
        k,
        lambda: cfg.lambda,
        step: 1.0 / (2.0 * cfg.lambda * graph.laplacian_bound() + 1e-6),
    };
    let mut scratch = vec![0.0; n * k];
    let mut z = to_row_major(z_init.matrix());
    project_rows_in_place(&mut z, k);
    let mut gz = vec![0.0; n * k];
    let mut fz = qp.value_and_grad(&z, &mut gz);
    let mut pg = qp.pg_norm(&z, &gz, &mut scratch);
    let mut best = (z.clone(), fz, pg);
    let mut y = z.clone();
    let mut gy = gz.clone();
    let mut y_is_z = true;
    let mut next = vec![0.0; n * k];
    let mut g_next = vec![0.0; n * k];
    let mut theta = 1.0f64;
    let mut iterations = 0;
    while pg >= cfg.pg_tol && iterations < cfg.qp_max_iter {
        iterations += 1;
        if y_is_z {
            gy.copy_from_slice(&gz);
        } else {
            qp.value_and_grad(&y, &mut gy);
        }
        for ((o, yi), gi) in next.iter_mut().zip(&y).zip(&gy) {
            *o = yi - qp.step * gi;
        }
        project_rows_in_place(&mut next, k);
        let f_next = qp.value_and_grad(&next, &mut g_next);
        if f_next > fz && !y_is_z {
            // Restart the momentum from the last iterate.
            y.copy_from_slice(&z);
            y_is_z = true;
            theta = 1.0;
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        for ((yi, ni), zi) in y.iter_mut().zip(&next).zip(&z) {
            *yi = ni + beta * (ni - zi);
        }
        y_is_z = beta == 0.0;
        theta = theta_next;
        std::mem::swap(&mut z, &mut next);
        std::mem::swap(&mut gz, &mut g_next);
        fz = f_next;
        pg = qp.pg_norm(&z, &gz, &mut scratch);
        if fz < best.1 || (fz == best.1 && pg < best.2) {
            best = (z.clone(), fz, pg);
        }
    }
    let converged = pg < cfg.pg_tol;
    if !converged {
        log::warn!(
            "assignment step stopped after {iterations} iterations, projected gradient {pg:e}"
        );
    }
    Ok(AssignmentOutcome {
        z: SoftAssignment::new_unchecked(from_row_major(&best.0, n, k)),
        iterations,
        pg_norm: best.2,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct LapKmodesFit {
    pub soft: SoftAssignment,
    pub centers: Vec<Vec<f64>>,
    /// Scale of the last stage, used for out-of-sample mapping.
    pub scale: StageScale,
    pub objective_trace: Vec<(StageScale, f64)>,
    pub warnings: Vec<String>,
}

fn update_centers(
    data: &DataSet,
    z: &DMatrix<f64>,
    centers: &mut [Vec<f64>],
    scale: StageScale,
    tol: f64,
) -> Result<()> {
    let updated: Vec<Option<Vec<f64>>> = (0..centers.len())
        .into_par_iter()
        .map(|k| {
            let w: Vec<f64> = z.column(k).iter().copied().collect();
            let mass: f64 = w.iter().sum();
            if mass <= 0.0 {
                return Ok(None);
            }
            match scale {
                StageScale::KmeansLimit { .. } => {
                    let mut c = vec![0.0; data.dim()];
                    for (wn, p) in w.iter().zip(data.iter()) {
                        for (ci, v) in c.iter_mut().zip(p) {
                            *ci += wn * v / mass;
                        }
                    }
                    Ok(Some(c))
                }
                StageScale::Finite(sigma) => {
                    weighted_mode(data, w, sigma, &centers[k], tol).map(Some)
                }
            }
        })
        .collect::<Result<_>>()?;
    for (c, u) in centers.iter_mut().zip(updated) {
        if let Some(u) = u {
            *c = u;
        }
    }
    Ok(())
}

/// Trains Laplacian K-modes over the homotopy: a K-means-limit stage and
/// then each scheduled bandwidth, alternating the assignment QP with
/// weighted mean-shift centroid updates.
pub fn lap_kmodes_fit(
    data: &DataSet,
    k: usize,
    graph: &AffinityGraph,
    schedule: &HomotopySchedule,
    cfg: &LapKmodesConfig,
) -> Result<LapKmodesFit> {
    cfg.validate()?;
    check_graph(data, graph)?;
    let runs = if cfg.init.is_some() {
        1
    } else {
        cfg.restarts.max(1)
    };
    let mut best: Option<LapKmodesFit> = None;
    for r in 0..runs {
        let fit = fit_from_seed(
            data,
            k,
            graph,
            schedule,
            cfg,
            cfg.seed.wrapping_add(r as u64),
        )?;
        let better = match &best {
            None => true,
            Some(b) => final_objective(&fit) < final_objective(b),
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

fn final_objective(fit: &LapKmodesFit) -> f64 {
    fit.objective_trace.last().map_or(f64::INFINITY, |t| t.1)
}

fn fit_from_seed(
    data: &DataSet,
    k: usize,
    graph: &AffinityGraph,
    schedule: &HomotopySchedule,
    cfg: &LapKmodesConfig,
    seed: u64,
) -> Result<LapKmodesFit> {
    let mut centers = initial_centers(data, k, &cfg.init, seed)?;
    let labels = assign_nearest(data, &mut centers);
    let mut z = DMatrix::zeros(data.len(), k);
    for (n, l) in labels.into_iter().enumerate() {
        z[(n, l)] = 1.0;
    }
    let first = schedule
        .sigmas()
        .first()
        .copied()
        .unwrap_or_else(|| data.diameter().max(f64::MIN_POSITIVE));
    let mut stages = vec![StageScale::KmeansLimit { scale: first }];
    stages.extend(schedule.sigmas().iter().map(|s| StageScale::Finite(*s)));

    let mut objective_trace = Vec::new();
    let mut warnings = Vec::new();
    for &scale in &stages {
        let mut prev = f64::INFINITY;
        for _ in 0..cfg.max_rounds.max(1) {
            let out = lap_kmodes_assignment_step(
                data,
                &centers,
                scale,
                graph,
                &SoftAssignment::new_unchecked(z.clone()),
                cfg,
            )?;
            if !out.converged {
                warnings.push(format!(
                    "assignment step at {scale:?} stopped with projected gradient {:e}",
                    out.pg_norm
                ));
            }
            z = out.z.matrix().clone();
            update_centers(data, &z, &mut centers, scale, cfg.ms_tol)?;
            let obj =
                objective_with_cost(&z, &cost_matrix(data, &centers, scale), cfg.lambda, graph);
            objective_trace.push((scale, obj));
            if prev - obj <= cfg.round_tol * obj.abs() {
                break;
            }
            prev = obj;
        }
    }
    let scale = *stages.last().expect("at least the K-means stage");
    Ok(LapKmodesFit {
        soft: SoftAssignment::new_unchecked(z),
        centers,
        scale,
        objective_trace,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutOfSampleSoft {
    pub z: Vec<f64>,
    /// No training point has a nonzero affinity to `x`; only the centroid
    /// term was used.
    pub isolated: bool,
}

/// Soft assignment of a new point from the trained state.
pub fn lap_kmodes_out_of_sample(
    x: &[f64],
    fit: &LapKmodesFit,
    builder: &GraphBuilder,
) -> Result<OutOfSampleSoft> {
    builder.data().check_point(x)?;
    if fit.soft.len() != builder.data().len() {
        return Err(Error::invalid(
            "graph builder does not match the training set",
        ));
    }
    let logs: Vec<f64> = fit
        .centers
        .iter()
        .map(|c| fit.scale.log_similarity(x, c))
        .collect();
    let g = normalize_log_weights(&logs);
    let neighbors = builder.neighbors_of(x, None);
    let total: f64 = neighbors.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Ok(OutOfSampleSoft {
            z: simplex_project(&g),
            isolated: true,
        });
    }
    let k = fit.centers.len();
    let mut zbar = vec![0.0; k];
    for (m, w) in neighbors {
        for (acc, v) in zbar.iter_mut().zip(fit.soft.matrix().row(m).iter()) {
            *acc += w * v / total;
        }
    }
    let avg: Vec<f64> = zbar.iter().zip(&g).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(OutOfSampleSoft {
        z: simplex_project(&avg),
        isolated: false,
    })
}
