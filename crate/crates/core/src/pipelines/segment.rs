//! Image segmentation by clustering pixel features.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::image::{image_to_features, GrayImage, ImageFeatureSpec, LabelImage};
use crate::blur::{bms_cluster, bms_cluster_accelerated, BmsConfig, FilterSpec};
use crate::data::{norm, sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::mode_seek::{
    classify_stationary, merge_modes, ms_step, trace_all, Clustering, ModeStatus, ModeTrace,
    MsConfig, MsDiagnostics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentMethod {
    Ms,
    MsDisc,
    Bms,
    BmsAccel,
}

impl FromStr for SegmentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ms" => Ok(Self::Ms),
            "ms-disc" => Ok(Self::MsDisc),
            "bms" => Ok(Self::Bms),
            "bms-accel" => Ok(Self::BmsAccel),
            other => Err(Error::invalid(format!(
                "unknown segmentation method {other:?}"
            ))),
        }
    }
}

/// Image-plane cells of side `1/g` pixels, each remembering the mode that
/// the first finished trajectory through it reached.
#[derive(Debug, Clone, Default)]
pub struct CellCache {
    resolution: Option<u64>,
    cells: HashMap<(i64, i64), usize>,
}

impl CellCache {
    pub fn new(resolution: u64) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("cell resolution must be at least 1"));
        }
        Ok(Self {
            resolution: Some(resolution),
            cells: HashMap::new(),
        })
    }

    /// A cache that never hits.
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn resolution(&self) -> Option<u64> {
        self.resolution
    }

    /// Number of marked cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn key(&self, x: &[f64]) -> Option<(i64, i64)> {
        let g = self.resolution? as f64;
        Some(((x[0] * g).floor() as i64, (x[1] * g).floor() as i64))
    }

    pub fn lookup(&self, x: &[f64]) -> Option<usize> {
        self.key(x).and_then(|k| self.cells.get(&k).copied())
    }

    /// Marks cells not yet marked; earlier marks are kept.
    fn fill(&mut self, keys: &[(i64, i64)], mode: usize) {
        for &k in keys {
            self.cells.entry(k).or_insert(mode);
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscretizedOutput {
    pub clustering: Clustering,
    pub diagnostics: MsDiagnostics,
    pub cache_hits: usize,
    pub cache: CellCache,
}

fn check_spatial(features: &DataSet) -> Result<()> {
    if features.dim() < 2 {
        return Err(Error::invalid(
            "discretized mean-shift needs the two spatial features",
        ));
    }
    Ok(())
}

/// Gaussian mean-shift over pixel features, visiting pixels in order. Each
/// iterate first looks up the cell under its spatial coordinates and, if a
/// finished trajectory passed there, takes that trajectory's mode. A
/// trajectory that converges marks every cell it visited.
pub fn ms_discretized(
    features: &DataSet,
    sigma: f64,
    mut cache: CellCache,
    cfg: &MsConfig,
) -> Result<DiscretizedOutput> {
    cfg.validate()?;
    check_spatial(features)?;
    let model = KdeModel::gaussian(features.clone(), sigma)?;
    let mut modes: Vec<Vec<f64>> = Vec::new();
    let mut traces = Vec::with_capacity(features.len());
    let mut cache_hits = 0;
    for n in 0..features.len() {
        let start = features.point(n);
        let mut x = start.to_vec();
        let mut visited: Vec<(i64, i64)> = Vec::new();
        let mut trace = None;
        for it in 1..=cfg.max_iter {
            if let Some(id) = cache.lookup(&x) {
                cache_hits += 1;
                trace = Some(ModeTrace {
                    start: start.to_vec(),
                    mode: modes[id].clone(),
                    iterations: it - 1,
                    status: ModeStatus::Converged,
                    path: None,
                });
                break;
            }
            if let Some(k) = cache.key(&x) {
                if visited.last() != Some(&k) {
                    visited.push(k);
                }
            }
            let next = ms_step(&model, &x)?;
            if sq_dist(&next, &x).sqrt() <= cfg.tol * (1.0 + norm(&x)) {
                let status = classify_stationary(&model, &x)?;
                if status == ModeStatus::Converged {
                    cache.fill(&visited, modes.len());
                    modes.push(x.clone());
                }
                trace = Some(ModeTrace {
                    start: start.to_vec(),
                    mode: x.clone(),
                    iterations: it,
                    status,
                    path: None,
                });
                break;
            }
            x = next;
        }
        traces.push(Some(trace.unwrap_or_else(|| ModeTrace {
            start: start.to_vec(),
            mode: x,
            iterations: cfg.max_iter,
            status: ModeStatus::MaxIter,
            path: None,
        })));
    }
    let eps = cfg.merge_eps_for(model.bandwidth());
    let mut diagnostics = MsDiagnostics::default();
    let clustering = merge_modes(features, traces, eps, true, &mut diagnostics);
    Ok(DiscretizedOutput {
        clustering,
        diagnostics,
        cache_hits,
        cache,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    pub method: SegmentMethod,
    pub features: ImageFeatureSpec,
    /// Merge threshold in feature units.
    pub merge_eps: f64,
    /// Tolerance and iteration cap for the mean-shift methods.
    pub ms: MsConfig,
    pub bms: BmsConfig,
    pub cell_resolution: u64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            method: SegmentMethod::Ms,
            features: ImageFeatureSpec::default(),
            merge_eps: 0.5,
            ms: MsConfig::default(),
            bms: BmsConfig::default(),
            cell_resolution: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub method: SegmentMethod,
    pub bandwidth: f64,
    pub clusters: usize,
    pub pixels: usize,
    pub mean_iterations: f64,
    /// Number of pixels per iteration count.
    pub iteration_histogram: BTreeMap<usize, usize>,
    pub cache_hits: Option<usize>,
    pub runtime_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: LabelImage,
    pub report: SegmentReport,
}

fn histogram(iterations: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &it in iterations {
        *h.entry(it).or_insert(0) += 1;
    }
    h
}

/// Segments a grayscale image with bandwidth `sigma` in feature units
/// (pixels for the spatial part).
pub fn segment_image(image: &GrayImage, sigma: f64, cfg: &SegmentConfig) -> Result<Segmentation> {
    if !(cfg.merge_eps > 0.0 && cfg.merge_eps.is_finite()) {
        return Err(Error::invalid(format!(
            "merge eps must be positive, got {}",
            cfg.merge_eps
        )));
    }
    let started = Instant::now();
    let features = image_to_features(image, &cfg.features)?;
    let ms_cfg = MsConfig {
        merge_eps: Some(cfg.merge_eps),
        ..cfg.ms.clone()
    };
    let (clustering, iterations, cache_hits, warnings) = match cfg.method {
        SegmentMethod::Ms => {
            ms_cfg.validate()?;
            let model = KdeModel::gaussian(features.clone(), sigma)?;
            let traces = trace_all(&model, &ms_cfg)?;
            let mut diag = MsDiagnostics::default();
            let c = merge_modes(&features, traces, cfg.merge_eps, true, &mut diag);
            (c, diag.iterations, None, diag.warnings)
        }
        SegmentMethod::MsDisc => {
            let cache = CellCache::new(cfg.cell_resolution)?;
            let out = ms_discretized(&features, sigma, cache, &ms_cfg)?;
            (
                out.clustering,
                out.diagnostics.iterations,
                Some(out.cache_hits),
                out.diagnostics.warnings,
            )
        }
        SegmentMethod::Bms | SegmentMethod::BmsAccel => {
            let bms_cfg = BmsConfig {
                merge_eps: Some(cfg.merge_eps),
                ..cfg.bms.clone()
            };
            let out = if cfg.method == SegmentMethod::Bms {
                bms_cluster(&features, sigma, &bms_cfg, FilterSpec::Standard)?
            } else {
                bms_cluster_accelerated(&features, sigma, &bms_cfg)?
            };
            let warnings = if out.converged {
                Vec::new()
            } else {
                vec![format!(
                    "stopped at the iteration cap of {}",
                    bms_cfg.max_iter
                )]
            };
            (
                out.clustering,
                vec![out.iterations; features.len()],
                None,
                warnings,
            )
        }
    };
    let labels = LabelImage::new(
        image.height(),
        image.width(),
        clustering.labels,
        clustering.centers,
    )?;
    let mean_iterations = iterations.iter().sum::<usize>() as f64 / iterations.len() as f64;
    let report = SegmentReport {
        method: cfg.method,
        bandwidth: sigma,
        clusters: labels.num_clusters(),
        pixels: features.len(),
        mean_iterations,
        iteration_histogram: histogram(&iterations),
        cache_hits,
        runtime_seconds: started.elapsed().as_secs_f64(),
        warnings,
    };
    Ok(Segmentation { labels, report })
}
