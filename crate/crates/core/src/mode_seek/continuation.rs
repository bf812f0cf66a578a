use rayon::prelude::*;

use super::{find_mode, ModeStatus, MsConfig};
use crate::components::{Euclidean, OnlineComponents};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::kde::KdeModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeLevel {
    pub sigma: f64,
    pub modes: Vec<Vec<f64>>,
    /// For each mode of the previous level, the mode it reaches at this
    /// level. Empty at the first level.
    pub links: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeTree {
    pub levels: Vec<ModeLevel>,
}

impl ModeTree {
    pub fn mode_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.modes.len()).collect()
    }
}

/// Tracks the Gaussian KDE modes over an increasing bandwidth grid. The first
/// level starts a run from every data point; later levels start from the
/// previous level's modes plus the data mean.
pub fn mode_continuation(data: &DataSet, sigma_grid: &[f64], cfg: &MsConfig) -> Result<ModeTree> {
    cfg.validate()?;
    if sigma_grid.is_empty() {
        return Err(Error::invalid("bandwidth grid is empty"));
    }
    if sigma_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("bandwidths must be positive and finite"));
    }
    if sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("bandwidth grid must be strictly increasing"));
    }
    let mean: Vec<f64> = data.matrix().column_mean().iter().copied().collect();
    let mut levels: Vec<ModeLevel> = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let model = KdeModel::gaussian(data.clone(), sigma)?;
        let (seeds, linked) = match levels.last() {
            None => (data.to_rows(), 0),
            Some(prev) => {
                let mut s = prev.modes.clone();
                s.push(mean.clone());
                (s, prev.modes.len())
            }
        };
        let runs: Vec<_> = seeds
            .par_iter()
            .map(|s| find_mode(&model, s, cfg))
            .collect::<Result<Vec<_>>>()?;
        let eps = cfg.merge_eps.unwrap_or(sigma / 100.0);
        let mut online = OnlineComponents::new(data.dim(), eps);
        let mut links = Vec::with_capacity(linked);
        for (i, run) in runs.iter().enumerate() {
            let k =
                (run.status == ModeStatus::Converged).then(|| online.assign(&Euclidean, &run.mode));
            if i < linked {
                links.push(k);
            }
        }
        levels.push(ModeLevel {
            sigma,
            modes: online.means(),
            links,
        });
    }
    Ok(ModeTree { levels })
}
