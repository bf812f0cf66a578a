use nalgebra::{DMatrix, SymmetricEigen};

use super::{find_mode, log_density_derivatives, ModeStatus, MsConfig};
use crate::components::{Euclidean, OnlineComponents};
use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::kde::{normalize_log_weights, KdeModel};

/// Below this log-weight every joint kernel underflows in double precision.
const LOG_UNDERFLOW: f64 = -708.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMode {
    pub mode: Vec<f64>,
    /// Mixing mass of the data points whose runs end at this mode.
    pub weight: f64,
    /// Inverse of `-hess log p(y|x)` at the mode, with nonpositive curvature
    /// directions given zero variance.
    pub error_bar: DMatrix<f64>,
}

/// Modes of `p(y | x = query)` for a joint Gaussian KDE over stacked `(x, y)`
/// columns, where the first `x_dim` coordinates are `x`. Sorted by weight,
/// largest first.
pub fn conditional_modes(
    pairs: &DataSet,
    x_dim: usize,
    sigma: f64,
    query: &[f64],
    cfg: &MsConfig,
) -> Result<Vec<ConditionalMode>> {
    cfg.validate()?;
    if x_dim == 0 || x_dim >= pairs.dim() {
        return Err(Error::invalid(format!(
            "x dimension must be in 1..{}, got {x_dim}",
            pairs.dim()
        )));
    }
    if query.len() != x_dim {
        return Err(Error::DimensionMismatch {
            expected: x_dim,
            got: query.len(),
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive, got {sigma}"
        )));
    }
    let logs: Vec<f64> = pairs
        .iter()
        .map(|p| -0.5 * sq_dist(&p[..x_dim], query) / (sigma * sigma))
        .collect();
    if logs.iter().all(|l| *l < LOG_UNDERFLOW) {
        return Err(Error::OutOfSupport);
    }
    let weights = normalize_log_weights(&logs);

    let ys = pairs.matrix().rows(x_dim, pairs.dim() - x_dim).into_owned();
    let model = KdeModel::gaussian(DataSet::new(ys)?, sigma)?.with_weights(weights.clone())?;
    let eps = cfg.merge_eps_for(model.bandwidth());

    let mut online = OnlineComponents::new(model.dim(), eps);
    let mut mass = Vec::new();
    for (n, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let trace = find_mode(&model, model.data().point(n), cfg)?;
        if trace.status != ModeStatus::Converged {
            continue;
        }
        let k = online.assign(&Euclidean, &trace.mode);
        if k == mass.len() {
            mass.push(0.0);
        }
        mass[k] += w;
    }

    let mut modes = online
        .means()
        .into_iter()
        .zip(mass)
        .map(|(mode, weight)| {
            let error_bar = error_bar(&model, &mode)?;
            Ok(ConditionalMode {
                mode,
                weight,
                error_bar,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    modes.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    Ok(modes)
}

fn error_bar(model: &KdeModel, mode: &[f64]) -> Result<DMatrix<f64>> {
    let (_, hess_log) = log_density_derivatives(model, mode)?;
    let eig = SymmetricEigen::new(-hess_log);
    let inv = eig.eigenvalues.map(|l| if l > 0.0 { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv) * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(rows: &[[f64; 2]]) -> DataSet {
        DataSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Local maxima of the conditional density on a dense grid.
    fn grid_modes(data: &DataSet, sigma: f64, x0: f64, lo: f64, hi: f64) -> Vec<f64> {
        let n = 20_001;
        let dens = |y: f64| -> f64 {
            data.iter()
                .map(|p| {
                    (-0.5 * ((p[0] - x0).powi(2) + (p[1] - y).powi(2)) / (sigma * sigma)).exp()
                })
                .sum()
        };
        let ys: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let vals: Vec<f64> = ys.iter().map(|y| dens(*y)).collect();
        (1..n - 1)
            .filter(|&i| vals[i] > vals[i - 1] && vals[i] >= vals[i + 1])
            .map(|i| ys[i])
            .collect()
    }

    #[test]
    fn bimodal_pairs_match_grid() {
        let d = pairs(&[[0.0, 0.0], [0.0, 1.0]]);
        let modes = conditional_modes(&d, 1, 0.25, &[0.0], &MsConfig::default()).unwrap();
        let mut found: Vec<f64> = modes.iter().map(|m| m.mode[0]).collect();
        found.sort_by(f64::total_cmp);
        let oracle = grid_modes(&d, 0.25, 0.0, -1.0, 2.0);
        assert_eq!(found.len(), 2);
        assert_eq!(oracle.len(), 2);
        for (a, b) in found.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        assert!((modes[0].weight - 0.5).abs() < 1e-12);
        for m in &modes {
            assert!(m.error_bar[(0, 0)] > 0.0);
        }
    }

    #[test]
    fn linear_relation_is_unimodal() {
        let rows: Vec<[f64; 2]> = (0..41)
            .map(|i| {
                let x = -2.0 + 0.1 * i as f64;
                [x, x]
            })
            .collect();
        let d = pairs(&rows);
        let modes = conditional_modes(&d, 1, 0.3, &[0.5], &MsConfig::default()).unwrap();
        assert_eq!(modes.len(), 1);
        let oracle = grid_modes(&d, 0.3, 0.5, -3.0, 3.0);
        assert_eq!(oracle.len(), 1);
        assert!((modes[0].mode[0] - oracle[0]).abs() < 1e-3);
        assert!((modes[0].mode[0] - 0.5).abs() < 0.05);
        assert!((modes[0].weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_with_wide_bandwidth() {
        let d = pairs(&[[0.0, -1.0], [0.0, 1.0]]);
        let modes = conditional_modes(&d, 1, 5.0, &[0.0], &MsConfig::default()).unwrap();
        assert_eq!(modes.len(), 1);
        assert!(modes[0].mode[0].abs() < 1e-4);
    }

    #[test]
    fn far_query_is_out_of_support() {
        let d = pairs(&[[0.0, 0.0], [0.0, 1.0]]);
        let err = conditional_modes(&d, 1, 0.1, &[100.0], &MsConfig::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfSupport));
    }

    #[test]
    fn error_bar_of_single_gaussian_is_its_variance() {
        let d = pairs(&[[0.0, 3.0]]);
        let modes = conditional_modes(&d, 1, 0.5, &[0.2], &MsConfig::default()).unwrap();
        assert!((modes[0].error_bar[(0, 0)] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let d = pairs(&[[0.0, 0.0]]);
        assert!(conditional_modes(&d, 2, 1.0, &[0.0, 0.0], &MsConfig::default()).is_err());
        assert!(conditional_modes(&d, 1, 1.0, &[0.0, 0.0], &MsConfig::default()).is_err());
    }
}
