//! Non-blurring mean-shift: the fixed-point iteration `x <- f(x)` run on a
//! fixed density, and everything built on it.

mod cluster;
mod conditional;
mod continuation;
mod newton;

pub(crate) use cluster::{merge_modes, trace_all};
pub use cluster::{
    ms_cluster, out_of_sample_assign, Clustering, MsClusterOutput, MsDiagnostics, OutOfSample,
    OutOfSampleResult,
};
pub use conditional::{conditional_modes, ConditionalMode};
pub use continuation::{mode_continuation, ModeLevel, ModeTree};
pub use newton::find_mode_newton;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{norm, sq_dist};
use crate::error::{Error, Result};
use crate::kde::{normalize_log_weights, BandwidthSpec, KdeModel, Kernel};

/// Relative Hessian eigenvalue above which a stationary point is not a mode.
const NON_MODE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MsConfig {
    /// Stop when `||x+ - x|| <= tol (1 + ||x||)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Connected-components threshold; `None` uses a hundredth of the
    /// (smallest) bandwidth.
    pub merge_eps: Option<f64>,
    pub record_path: bool,
}

impl Default for MsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10_000,
            merge_eps: None,
            record_path: false,
        }
    }
}

impl MsConfig {
    pub fn merge_eps_for(&self, bandwidth: &BandwidthSpec) -> f64 {
        self.merge_eps.unwrap_or(bandwidth.min() / 100.0)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if let Some(eps) = self.merge_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid(format!(
                    "merge eps must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ModeStatus {
    Converged,
    MaxIter,
    /// The iteration stopped at a minimum or saddle of the density.
    StationaryNonMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrace {
    pub start: Vec<f64>,
    pub mode: Vec<f64>,
    pub iterations: usize,
    pub status: ModeStatus,
    pub path: Option<Vec<Vec<f64>>>,
}

/// Normalized mean-shift weights `pi_n (-K'(t_n)) / sigma_n^2`.
fn shift_weights(model: &KdeModel, x: &[f64]) -> Result<Vec<f64>> {
    model.data().check_point(x)?;
    let bw = model.bandwidth();
    match model.kernel() {
        Kernel::Gaussian => {
            let logs: Vec<f64> = (0..model.len())
                .map(|n| {
                    let s = bw.get(n);
                    model.weights()[n].ln() - 0.5 * model.scaled_sq_dist(x, n) - 2.0 * s.ln()
                })
                .collect();
            Ok(normalize_log_weights(&logs))
        }
        kernel => {
            let w: Vec<f64> = (0..model.len())
                .map(|n| {
                    let s = bw.get(n);
                    -model.weights()[n] * kernel.derivative(model.scaled_sq_dist(x, n)) / (s * s)
                })
                .collect();
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::IsolatedPoint);
            }
            Ok(w.into_iter().map(|v| v / total).collect())
        }
    }
}

fn weighted_mean(model: &KdeModel, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.dim()];
    for (n, wn) in w.iter().enumerate() {
        if *wn == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(model.data().point(n)) {
            *o += wn * v;
        }
    }
    out
}

/// One mean-shift update `f(x)`: a convex combination of the data points.
///
/// With per-point Gaussian bandwidths this is the inverse-variance
/// reweighted update of [`ms_step_adaptive`].
pub fn ms_step(model: &KdeModel, x: &[f64]) -> Result<Vec<f64>> {
    let w = shift_weights(model, x)?;
    Ok(weighted_mean(model, &w))
}

/// Adaptive-bandwidth update: posteriors `p(n|x)` reweighted by
/// `sigma_n^-2` and renormalized.
pub fn ms_step_adaptive(model: &KdeModel, x: &[f64]) -> Result<Vec<f64>> {
    model.require_gaussian("adaptive mean-shift")?;
    let BandwidthSpec::PerPoint(sigmas) = model.bandwidth() else {
        return Err(Error::invalid(
            "adaptive mean-shift needs per-point bandwidths; use ms_step",
        ));
    };
    let post = model.posteriors(x)?;
    let mut q: Vec<f64> = post.iter().zip(sigmas).map(|(p, s)| p / (s * s)).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    Ok(weighted_mean(model, &q))
}

/// Jacobian of the Gaussian mean-shift map,
/// `(sum_n p(n|x) x_n x_n^T - f(x) f(x)^T) / sigma^2`.
pub fn ms_jacobian(model: &KdeModel, x: &[f64]) -> Result<DMatrix<f64>> {
    model.require_gaussian("mean-shift Jacobian")?;
    let sigma = model
        .bandwidth()
        .scalar()
        .ok_or_else(|| Error::invalid("the Jacobian is defined for a scalar bandwidth"))?;
    let post = model.posteriors(x)?;
    let dim = model.dim();
    let mut second = DMatrix::zeros(dim, dim);
    for (n, p) in post.iter().enumerate() {
        let xn = model.data().point_vec(n);
        second.ger(*p, &xn, &xn, 1.0);
    }
    let f = DVector::from_vec(weighted_mean(model, &post));
    second.ger(-1.0, &f, &f, 1.0);
    Ok(second / (sigma * sigma))
}

/// `grad log p` and `hess log p` of a Gaussian model from its posteriors, so
/// they stay finite where the density itself underflows.
pub(crate) fn log_density_derivatives(
    model: &KdeModel,
    x: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let post = model.posteriors(x)?;
    let dim = model.dim();
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    let mut diff = DVector::zeros(dim);
    for (n, q) in post.iter().enumerate() {
        if *q == 0.0 {
            continue;
        }
        let s2 = model.bandwidth().get(n).powi(2);
        for (i, (xi, xn)) in x.iter().zip(model.data().point(n)).enumerate() {
            diff[i] = xi - xn;
        }
        grad.axpy(-q / s2, &diff, 1.0);
        hess.ger(q / (s2 * s2), &diff, &diff, 1.0);
        for i in 0..dim {
            hess[(i, i)] -= q / s2;
        }
    }
    // hess currently holds H / p.
    hess.ger(-1.0, &grad, &grad, 1.0);
    Ok((grad, hess))
}

/// Largest eigenvalue of `H / p` scaled by the smallest squared bandwidth.
fn curvature_check(model: &KdeModel, x: &[f64]) -> Result<f64> {
    let (grad, hess_log) = log_density_derivatives(model, x)?;
    let mut h_over_p = hess_log;
    h_over_p.ger(1.0, &grad, &grad, 1.0);
    let s2 = model.bandwidth().min().powi(2);
    let eig = SymmetricEigen::new(h_over_p * s2).eigenvalues;
    Ok(eig.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub(crate) fn classify_stationary(model: &KdeModel, x: &[f64]) -> Result<ModeStatus> {
    if !model.kernel().is_gaussian() {
        return Ok(ModeStatus::Converged);
    }
    Ok(if curvature_check(model, x)? > -NON_MODE_THRESHOLD {
        ModeStatus::StationaryNonMode
    } else {
        ModeStatus::Converged
    })
}

/// Runs the mean-shift iteration from `x0` until the relative step falls
/// below `tol` (Gaussian) or an exact fixed point is reached (Epanechnikov).
pub fn find_mode(model: &KdeModel, x0: &[f64], cfg: &MsConfig) -> Result<ModeTrace> {
    cfg.validate()?;
    model.data().check_point(x0)?;
    let exact = !model.kernel().is_gaussian();
    let mut x = x0.to_vec();
    let mut path = cfg.record_path.then(|| vec![x.clone()]);
    for it in 1..=cfg.max_iter {
        let next = ms_step(model, &x)?;
        let step = sq_dist(&next, &x).sqrt();
        let done = if exact {
            step == 0.0
        } else {
            step <= cfg.tol * (1.0 + norm(&x))
        };
        if done {
            let status = classify_stationary(model, &x)?;
            return Ok(ModeTrace {
                start: x0.to_vec(),
                mode: x,
                iterations: it,
                status,
                path,
            });
        }
        x = next;
        if let Some(p) = path.as_mut() {
            p.push(x.clone());
        }
    }
    Ok(ModeTrace {
        start: x0.to_vec(),
        mode: x,
        iterations: cfg.max_iter,
        status: ModeStatus::MaxIter,
        path,
    })
}

/// Mean-shift ascent that steps off minima and saddles along the direction of
/// positive curvature and keeps climbing.
pub(crate) fn ascend_to_mode(model: &KdeModel, x0: &[f64], cfg: &MsConfig) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    for _ in 0..8 {
        let trace = find_mode(model, &x, cfg)?;
        if trace.status != ModeStatus::StationaryNonMode {
            return Ok(trace.mode);
        }
        let (grad, hess_log) = log_density_derivatives(model, &trace.mode)?;
        let mut h = hess_log;
        h.ger(1.0, &grad, &grad, 1.0);
        let eig = SymmetricEigen::new(h);
        let (imax, _) =
            eig.eigenvalues
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (i, v)| if *v > b.1 { (i, *v) } else { b },
                );
        let mut dir = eig.eigenvectors.column(imax).into_owned();
        if dir.dot(&grad) < 0.0 {
            dir = -dir;
        }
        let step = 1e-3 * model.bandwidth().min();
        x = trace
            .mode
            .iter()
            .zip(dir.iter())
            .map(|(m, d)| m + step * d)
            .collect();
    }
    Ok(find_mode(model, &x, cfg)?.mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataSet;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn model_1d(points: &[f64], kernel: Kernel, sigma: f64) -> KdeModel {
        KdeModel::new(
            DataSet::from_scalars(points).unwrap(),
            kernel,
            BandwidthSpec::Scalar(sigma),
        )
        .unwrap()
    }

    #[test]
    fn step_hand_values() {
        let m = model_1d(&[0.0, 2.0], Kernel::Gaussian, 1.0);
        assert_relative_eq!(ms_step(&m, &[1.0]).unwrap()[0], 1.0, epsilon = 1e-15);
        let e = (-2.0f64).exp();
        let expect = 2.0 * e / (1.0 + e);
        assert_relative_eq!(ms_step(&m, &[0.0]).unwrap()[0], expect, epsilon = 1e-15);
        assert_relative_eq!(expect, 0.23840, epsilon = 1e-5);

        let m = model_1d(&[0.0, 1.0, 5.0], Kernel::Epanechnikov, 2.0);
        assert_eq!(ms_step(&m, &[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn epanechnikov_empty_neighborhood_is_isolated() {
        let m = model_1d(&[0.0, 1.0], Kernel::Epanechnikov, 0.5);
        assert!(matches!(ms_step(&m, &[10.0]), Err(Error::IsolatedPoint)));
    }

    #[test]
    fn adaptive_step_hand_value() {
        let data = DataSet::from_scalars(&[0.0, 2.0]).unwrap();
        let m = KdeModel::new(
            data,
            Kernel::Gaussian,
            BandwidthSpec::PerPoint(vec![1.0, 2.0]),
        )
        .unwrap();
        let w1 = (-0.5f64).exp();
        let w2 = (-0.125f64).exp() * 0.25;
        let expect = 2.0 * w2 / (w1 + w2);
        assert_relative_eq!(
            ms_step_adaptive(&m, &[1.0]).unwrap()[0],
            expect,
            epsilon = 1e-14
        );
        assert_relative_eq!(ms_step(&m, &[1.0]).unwrap()[0], expect, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_step_with_equal_bandwidths_matches_plain_step() {
        let pts = [0.0, 0.7, 2.0, 3.3];
        let scalar = model_1d(&pts, Kernel::Gaussian, 0.8);
        let per = KdeModel::new(
            DataSet::from_scalars(&pts).unwrap(),
            Kernel::Gaussian,
            BandwidthSpec::PerPoint(vec![0.8; 4]),
        )
        .unwrap();
        for x in [-1.0, 0.3, 1.9, 4.0] {
            let a = ms_step(&scalar, &[x]).unwrap()[0];
            let b = ms_step_adaptive(&per, &[x]).unwrap()[0];
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ms_step_adaptive(&scalar, &[0.0]).is_err());
    }

    /// Dense grid search for the maxima of a 1D density.
    fn grid_modes(m: &KdeModel, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let xs: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let p: Vec<f64> = xs.iter().map(|x| m.density(&[*x]).unwrap()).collect();
        (1..n)
            .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
            .map(|i| xs[i])
            .collect()
    }

    #[test]
    fn find_mode_matches_grid_oracle() {
        let m = model_1d(&[0.0, 1.0], Kernel::Gaussian, 1.0);
        let oracle = grid_modes(&m, -1.0, 2.0, 300_000);
        assert_eq!(oracle.len(), 1);
        let t = find_mode(&m, &[0.0], &MsConfig::default()).unwrap();
        assert_eq!(t.status, ModeStatus::Converged);
        assert!((t.mode[0] - oracle[0]).abs() < 1e-4);
    }

    #[test]
    fn find_mode_at_fixed_point() {
        let m = model_1d(&[0.0, 2.0], Kernel::Gaussian, 3.0);
        let t = find_mode(&m, &[1.0], &MsConfig::default()).unwrap();
        assert!(t.iterations <= 1);
        assert_eq!(t.mode, vec![1.0]);
    }

    #[test]
    fn epanechnikov_reaches_exact_fixed_point() {
        let m = model_1d(&[0.0, 1.0, 5.0], Kernel::Epanechnikov, 2.0);
        let t = find_mode(&m, &[4.9], &MsConfig::default()).unwrap();
        assert_eq!(t.status, ModeStatus::Converged);
        assert_eq!(t.mode, vec![5.0]);
        assert!(t.iterations < 10);
    }

    #[test]
    fn max_iter_is_reported() {
        let m = model_1d(&[0.0, 1.0, 2.5], Kernel::Gaussian, 1.0);
        let cfg = MsConfig {
            max_iter: 2,
            tol: 1e-14,
            ..MsConfig::default()
        };
        let t = find_mode(&m, &[-3.0], &cfg).unwrap();
        assert_eq!(t.status, ModeStatus::MaxIter);
        assert_eq!(t.iterations, 2);
    }

    #[test]
    fn minimum_between_modes_is_flagged() {
        // Symmetric bimodal density: the midpoint is an exact fixed point and a minimum.
        let m = model_1d(&[0.0, 4.0], Kernel::Gaussian, 1.0);
        let t = find_mode(&m, &[2.0], &MsConfig::default()).unwrap();
        assert_eq!(t.status, ModeStatus::StationaryNonMode);
        let escaped = ascend_to_mode(&m, &[2.0], &MsConfig::default()).unwrap();
        assert!((escaped[0] - 2.0).abs() > 1.0);
    }

    #[test]
    fn jacobian_matches_finite_differences_and_covariance() {
        let data = DataSet::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.3],
            vec![0.4, 1.2],
            vec![2.0, 1.0],
        ])
        .unwrap();
        let m = KdeModel::gaussian(data, 0.9).unwrap();
        let x = [0.7, 0.5];
        let j = ms_jacobian(&m, &x).unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fp = ms_step(&m, &xp).unwrap();
            let fm = ms_step(&m, &xm).unwrap();
            for r in 0..2 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - j[(r, c)]).abs() <= 1e-4 * j.norm());
            }
        }
        let cov = m.local_covariance(&x).unwrap() / (0.9 * 0.9);
        assert!((cov - &j).norm() < 1e-12);
    }

    #[test]
    fn jacobian_eigenvalue_at_mode_in_unit_interval() {
        let m = model_1d(&[0.0, 1.0], Kernel::Gaussian, 1.0);
        let cfg = MsConfig {
            tol: 1e-12,
            ..MsConfig::default()
        };
        let t = find_mode(&m, &[0.0], &cfg).unwrap();
        let j = ms_jacobian(&m, &t.mode).unwrap()[(0, 0)];
        assert!(j > 0.0 && j < 1.0);
    }

    #[test]
    fn jacobian_of_single_point_is_zero() {
        let m = model_1d(&[1.5], Kernel::Gaussian, 1.0);
        assert_eq!(ms_jacobian(&m, &[1.5]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn traces_are_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let m = KdeModel::gaussian(DataSet::from_rows(&pts).unwrap(), 0.5).unwrap();
        let cfg = MsConfig {
            record_path: true,
            ..MsConfig::default()
        };
        let a = find_mode(&m, &[0.1, 0.2], &cfg).unwrap();
        let b = find_mode(&m, &[0.1, 0.2], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.path.unwrap().len() >= 2);
    }

    proptest! {
        #[test]
        fn gaussian_path_ascends_and_turns_smoothly(
            pts in prop::collection::vec(-4.0f64..4.0, 4..40),
            sigma in 0.2f64..2.0,
            start in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let n = pts.len() / 2;
            let data = DataSet::new(DMatrix::from_vec(2, n, pts[..2 * n].to_vec())).unwrap();
            let m = KdeModel::gaussian(data, sigma).unwrap();
            let cfg = MsConfig { record_path: true, max_iter: 500, ..MsConfig::default() };
            let t = find_mode(&m, &start, &cfg).unwrap();
            let path = t.path.unwrap();
            for w in path.windows(2) {
                let (p0, p1) = (m.density(&w[0]).unwrap(), m.density(&w[1]).unwrap());
                prop_assert!(p1 >= p0 - 1e-12 * p0.abs());
            }
            for w in path.windows(3) {
                let a: Vec<f64> = w[1].iter().zip(&w[0]).map(|(x, y)| x - y).collect();
                let b: Vec<f64> = w[2].iter().zip(&w[1]).map(|(x, y)| x - y).collect();
                let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                if norm(&a) > 1e-9 && norm(&b) > 1e-9 {
                    prop_assert!(dot > 0.0);
                }
            }
        }

        #[test]
        fn step_stays_in_hull_1d(
            pts in prop::collection::vec(-4.0f64..4.0, 1..30),
            sigma in 0.1f64..3.0,
            x in -10.0f64..10.0,
        ) {
            let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let m = model_1d(&pts, Kernel::Gaussian, sigma);
            let f = ms_step(&m, &[x]).unwrap()[0];
            prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
            let w = shift_weights(&m, &[x]).unwrap();
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn epanechnikov_terminates_exactly(
            pts in prop::collection::vec(-4.0f64..4.0, 2..30),
            sigma in 0.5f64..3.0,
            seed_idx in 0usize..30,
        ) {
            let m = model_1d(&pts, Kernel::Epanechnikov, sigma);
            let x0 = [pts[seed_idx % pts.len()]];
            let t = find_mode(&m, &x0, &MsConfig::default()).unwrap();
            prop_assert_eq!(t.status, ModeStatus::Converged);
            prop_assert_eq!(ms_step(&m, &t.mode).unwrap(), t.mode.clone());
        }

        #[test]
        fn converged_trace_satisfies_stopping_invariant(
            pts in prop::collection::vec(-4.0f64..4.0, 1..20),
            sigma in 0.2f64..2.0,
            x in -5.0f64..5.0,
        ) {
            let m = model_1d(&pts, Kernel::Gaussian, sigma);
            let cfg = MsConfig::default();
            let t = find_mode(&m, &[x], &cfg).unwrap();
            if t.status == ModeStatus::Converged {
                let f = ms_step(&m, &t.mode).unwrap();
                prop_assert!(sq_dist(&f, &t.mode).sqrt() <= cfg.tol * (1.0 + norm(&t.mode)));
            }
        }
    }
}
