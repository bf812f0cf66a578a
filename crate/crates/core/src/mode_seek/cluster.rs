use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{find_mode, ModeStatus, ModeTrace, MsConfig};
use crate::components::{Euclidean, Metric, OnlineComponents};
use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::kde::{BandwidthSpec, KdeModel, Kernel};

/// Hard (and optionally soft) partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// `N x K` soft assignments, rows on the probability simplex.
    pub soft: Option<DMatrix<f64>>,
}

impl Clustering {
    pub fn num_clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_clusters();
        if let Some(bad) = self.labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {k} clusters"
            )));
        }
        if let Some(z) = &self.soft {
            if z.nrows() != self.labels.len() || z.ncols() != k {
                return Err(Error::invalid("soft assignment shape mismatch"));
            }
            for row in z.row_iter() {
                if row.iter().any(|v| *v < 0.0) || (row.sum() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("soft assignment row is not on the simplex"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MsDiagnostics {
    pub iterations: Vec<usize>,
    /// Points with an empty kernel neighborhood, kept as singleton clusters.
    pub isolated: Vec<usize>,
    pub max_iter_reached: Vec<usize>,
    pub non_modes: Vec<usize>,
    pub warnings: Vec<String>,
}

impl MsDiagnostics {
    pub fn mean_iterations(&self) -> f64 {
        if self.iterations.is_empty() {
            return 0.0;
        }
        self.iterations.iter().sum::<usize>() as f64 / self.iterations.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct MsClusterOutput {
    pub clustering: Clustering,
    pub model: KdeModel,
    pub merge_eps: f64,
    pub diagnostics: MsDiagnostics,
}

/// Diagonal of the bounding box, a cheap stand-in for the data diameter.
pub(crate) fn bounding_box_diagonal(data: &DataSet) -> f64 {
    let d = data.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in data.iter() {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    sq_dist(&lo, &hi).sqrt()
}

/// Mean-shift clustering: a mode search from every data point followed by a
/// tight-clusters merge of the convergence points.
pub fn ms_cluster(
    data: &DataSet,
    kernel: Kernel,
    bandwidth: BandwidthSpec,
    cfg: &MsConfig,
) -> Result<MsClusterOutput> {
    cfg.validate()?;
    let model = KdeModel::new(data.clone(), kernel, bandwidth)?;
    let eps = cfg.merge_eps_for(model.bandwidth());
    let mut diagnostics = MsDiagnostics::default();
    let scale = bounding_box_diagonal(data);
    if eps < 10.0 * cfg.tol * scale {
        let msg = format!(
            "merge eps {eps:e} is below 10 * tol * data scale ({:e}); modes may fail to merge",
            10.0 * cfg.tol * scale
        );
        log::warn!("{msg}");
        diagnostics.warnings.push(msg);
    }

    let traces = trace_all(&model, cfg)?;
    let clustering = merge_modes(data, traces, eps, false, &mut diagnostics);
    Ok(MsClusterOutput {
        clustering,
        model,
        merge_eps: eps,
        diagnostics,
    })
}

/// Mode search from every data point of `model` in parallel. Isolated
/// points come back as `None`.
pub(crate) fn trace_all(model: &KdeModel, cfg: &MsConfig) -> Result<Vec<Option<ModeTrace>>> {
    let data = model.data();
    (0..data.len())
        .into_par_iter()
        .map(|n| match find_mode(model, data.point(n), cfg) {
            Ok(t) => Ok(Some(t)),
            Err(Error::IsolatedPoint) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Groups the convergence points of per-point mode searches into clusters.
/// `None` marks an isolated point, which becomes its own cluster. With
/// `raster_hint` the previous point's component is tried first.
pub(crate) fn merge_modes(
    data: &DataSet,
    traces: Vec<Option<ModeTrace>>,
    eps: f64,
    raster_hint: bool,
    diagnostics: &mut MsDiagnostics,
) -> Clustering {
    let mut online = OnlineComponents::new(data.dim(), eps);
    let mut label_of_component: Vec<usize> = Vec::new();
    let mut centers: Vec<Option<Vec<f64>>> = Vec::new();
    let mut labels = Vec::with_capacity(data.len());
    for (n, trace) in traces.into_iter().enumerate() {
        match trace {
            None => {
                diagnostics.isolated.push(n);
                diagnostics.iterations.push(0);
                labels.push(centers.len());
                centers.push(Some(data.point(n).to_vec()));
            }
            Some(t) => {
                diagnostics.iterations.push(t.iterations);
                match t.status {
                    ModeStatus::MaxIter => diagnostics.max_iter_reached.push(n),
                    ModeStatus::StationaryNonMode => diagnostics.non_modes.push(n),
                    ModeStatus::Converged => {}
                }
                let c = if raster_hint {
                    online.assign_with_hint(&Euclidean, &t.mode)
                } else {
                    online.assign(&Euclidean, &t.mode)
                };
                if c == label_of_component.len() {
                    label_of_component.push(centers.len());
                    centers.push(None);
                }
                labels.push(label_of_component[c]);
            }
        }
    }
    for (c, mean) in online.means().into_iter().enumerate() {
        centers[label_of_component[c]] = Some(mean);
    }
    if !diagnostics.isolated.is_empty() {
        diagnostics.warnings.push(format!(
            "{} isolated points kept as singletons",
            diagnostics.isolated.len()
        ));
    }
    Clustering {
        labels,
        centers: centers
            .into_iter()
            .map(|c| c.expect("every cluster has a center"))
            .collect(),
        soft: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutOfSample {
    Cluster(usize),
    /// Converged to a mode farther than `eps` from every known center.
    NewMode(Vec<f64>),
    NotConverged,
}

#[derive(Debug, Clone)]
pub struct OutOfSampleResult {
    pub assignment: OutOfSample,
    pub trace: ModeTrace,
}

/// Maps a new point to a cluster by running mean-shift on the original
/// density and matching the mode reached against the known centers.
pub fn out_of_sample_assign(
    clustering: &Clustering,
    model: &KdeModel,
    x: &[f64],
    cfg: &MsConfig,
) -> Result<OutOfSampleResult> {
    let eps = cfg.merge_eps_for(model.bandwidth());
    let trace = find_mode(model, x, cfg)?;
    if trace.status == ModeStatus::MaxIter {
        return Ok(OutOfSampleResult {
            assignment: OutOfSample::NotConverged,
            trace,
        });
    }
    let nearest = clustering
        .centers
        .iter()
        .enumerate()
        .filter(|(_, c)| Euclidean.within(&trace.mode, c, eps))
        .min_by(|a, b| sq_dist(&trace.mode, a.1).total_cmp(&sq_dist(&trace.mode, b.1)))
        .map(|(k, _)| k);
    let assignment = match nearest {
        Some(k) => OutOfSample::Cluster(k),
        None => OutOfSample::NewMode(trace.mode.clone()),
    };
    Ok(OutOfSampleResult { assignment, trace })
}
