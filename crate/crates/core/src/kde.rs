//! Kernel density estimates with the unnormalized profile convention
//! `p(x) = sum_n pi_n K(||(x - x_n) / sigma_n||^2)`.
//!
//! The normalization constant of the kernel is left out everywhere except in
//! [`KdeModel::normalized_density`]; modes, posteriors and clusterings do not
//! depend on it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{log_sum_exp, sq_dist, DataSet};
use crate::error::{Error, Result};

/// Kernel profile `K(t)` evaluated at squared scaled distance `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `K(t) = exp(-t/2)`.
    Gaussian,
    /// `K(t) = 1 - t` on `[0, 1)`, zero afterwards.
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn profile(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * t).exp(),
            Kernel::Epanechnikov => {
                if t < 1.0 {
                    1.0 - t
                } else {
                    0.0
                }
            }
        }
    }

    /// `dK/dt`. On the Epanechnikov support boundary `t = 1` the inside
    /// derivative is returned.
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => -0.5 * (-0.5 * t).exp(),
            Kernel::Epanechnikov => {
                if t <= 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_gaussian(self) -> bool {
        self == Kernel::Gaussian
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSpec {
    Scalar(f64),
    PerPoint(Vec<f64>),
}

impl BandwidthSpec {
    fn validate(&self, n: usize) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        match self {
            BandwidthSpec::Scalar(s) if !ok(*s) => Err(Error::invalid(format!(
                "bandwidth must be positive and finite, got {s}"
            ))),
            BandwidthSpec::PerPoint(v) if v.len() != n => Err(Error::invalid(format!(
                "expected {n} per-point bandwidths, got {}",
                v.len()
            ))),
            BandwidthSpec::PerPoint(v) if !v.iter().all(|s| ok(*s)) => Err(Error::invalid(
                "per-point bandwidths must be positive and finite",
            )),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn get(&self, n: usize) -> f64 {
        match self {
            BandwidthSpec::Scalar(s) => *s,
            BandwidthSpec::PerPoint(v) => v[n],
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            BandwidthSpec::Scalar(s) => Some(*s),
            BandwidthSpec::PerPoint(_) => None,
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            BandwidthSpec::Scalar(s) => *s,
            BandwidthSpec::PerPoint(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Immutable kernel density estimate over a dataset.
#[derive(Debug, Clone)]
pub struct KdeModel {
    data: DataSet,
    kernel: Kernel,
    bandwidth: BandwidthSpec,
    weights: Vec<f64>,
}

impl KdeModel {
    /// Model with uniform mixing weights `1/N`.
    pub fn new(data: DataSet, kernel: Kernel, bandwidth: BandwidthSpec) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("a density model needs at least one point"));
        }
        bandwidth.validate(data.len())?;
        let n = data.len();
        Ok(Self {
            data,
            kernel,
            bandwidth,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn gaussian(data: DataSet, sigma: f64) -> Result<Self> {
        Self::new(data, Kernel::Gaussian, BandwidthSpec::Scalar(sigma))
    }

    /// Replaces the mixing weights. They are renormalized to sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.data.len() {
            return Err(Error::invalid(format!(
                "expected {} weights, got {}",
                self.data.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must not all be zero"));
        }
        self.weights = weights.into_iter().map(|w| w / total).collect();
        Ok(self)
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> &BandwidthSpec {
        &self.bandwidth
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub(crate) fn scaled_sq_dist(&self, x: &[f64], n: usize) -> f64 {
        let s = self.bandwidth.get(n);
        sq_dist(x, self.data.point(n)) / (s * s)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.data.check_point(x)?;
        Ok((0..self.len())
            .map(|n| self.weights[n] * self.kernel.profile(self.scaled_sq_dist(x, n)))
            .sum())
    }

    /// Gaussian density including the `(2 pi sigma_n^2)^(-D/2)` factors.
    pub fn normalized_density(&self, x: &[f64]) -> Result<f64> {
        self.require_gaussian("normalized density")?;
        self.data.check_point(x)?;
        let d = self.dim() as f64;
        Ok((0..self.len())
            .map(|n| {
                let s = self.bandwidth.get(n);
                self.weights[n]
                    * (2.0 * std::f64::consts::PI * s * s).powf(-0.5 * d)
                    * (-0.5 * self.scaled_sq_dist(x, n)).exp()
            })
            .sum())
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.data.check_point(x)?;
        let mut g = DVector::zeros(self.dim());
        for n in 0..self.len() {
            let s = self.bandwidth.get(n);
            let c =
                self.weights[n] * self.kernel.derivative(self.scaled_sq_dist(x, n)) * 2.0 / (s * s);
            if c == 0.0 {
                continue;
            }
            for (gi, (xi, xn)) in g.iter_mut().zip(x.iter().zip(self.data.point(n))) {
                *gi += c * (xi - xn);
            }
        }
        Ok(g)
    }

    /// Analytic Hessian; Gaussian kernel only.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require_gaussian("Hessian")?;
        self.data.check_point(x)?;
        let dim = self.dim();
        let mut h = DMatrix::zeros(dim, dim);
        let mut diff = DVector::zeros(dim);
        for n in 0..self.len() {
            let s2 = self.bandwidth.get(n).powi(2);
            let k = self.weights[n] * (-0.5 * self.scaled_sq_dist(x, n)).exp();
            if k == 0.0 {
                continue;
            }
            for (i, (xi, xn)) in x.iter().zip(self.data.point(n)).enumerate() {
                diff[i] = xi - xn;
            }
            h.ger(k / (s2 * s2), &diff, &diff, 1.0);
            for i in 0..dim {
                h[(i, i)] -= k / s2;
            }
        }
        h.fill_lower_triangle_with_upper_triangle();
        Ok(h)
    }

    /// Posterior probabilities `p(n|x)` proportional to `pi_n K(t_n)`,
    /// computed in the log domain for the Gaussian kernel.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.data.check_point(x)?;
        match self.kernel {
            Kernel::Gaussian => {
                let logs: Vec<f64> = (0..self.len())
                    .map(|n| self.weights[n].ln() - 0.5 * self.scaled_sq_dist(x, n))
                    .collect();
                Ok(normalize_log_weights(&logs))
            }
            Kernel::Epanechnikov => {
                let w: Vec<f64> = (0..self.len())
                    .map(|n| self.weights[n] * self.kernel.profile(self.scaled_sq_dist(x, n)))
                    .collect();
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::IsolatedPoint);
                }
                Ok(w.into_iter().map(|v| v / total).collect())
            }
        }
    }

    /// Local covariance `sum_n p(n|x) (x_n - f(x))(x_n - f(x))^T` around the
    /// posterior mean `f(x)`.
    pub fn local_covariance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require_gaussian("local covariance")?;
        let post = self.posteriors(x)?;
        let dim = self.dim();
        let mut mean = DVector::<f64>::zeros(dim);
        for (n, p) in post.iter().enumerate() {
            for (m, v) in mean.iter_mut().zip(self.data.point(n)) {
                *m += p * v;
            }
        }
        let mut cov = DMatrix::zeros(dim, dim);
        let mut diff = DVector::zeros(dim);
        for (n, p) in post.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (i, v) in self.data.point(n).iter().enumerate() {
                diff[i] = v - mean[i];
            }
            cov.ger(*p, &diff, &diff, 1.0);
        }
        Ok(cov)
    }

    pub(crate) fn require_gaussian(&self, what: &'static str) -> Result<()> {
        if self.kernel.is_gaussian() {
            Ok(())
        } else {
            Err(Error::UnsupportedKernel(what))
        }
    }
}

/// Exponentiates and normalizes log-weights after subtracting their maximum.
pub(crate) fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

const PERPLEXITY_TOL: f64 = 1e-6;

/// Per-point Gaussian bandwidths such that each point's distribution over
/// the other points has the requested perplexity (effective neighbor count).
pub fn entropic_bandwidths(data: &DataSet, perplexity: f64) -> Result<BandwidthSpec> {
    let n = data.len();
    if n < 3 || !(perplexity > 1.0 && perplexity <= (n - 1) as f64) {
        return Err(Error::invalid(format!(
            "perplexity must lie in (1, N-1] = (1, {}], got {perplexity}",
            n.saturating_sub(1)
        )));
    }
    for a in 0..n {
        for b in a + 1..n {
            if data.point(a) == data.point(b) {
                return Err(Error::invalid(format!(
                    "duplicate points {a} and {b} are not allowed for entropic bandwidths"
                )));
            }
        }
    }
    let sigmas = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_dist(data.point(i), data.point(j)))
                .collect();
            solve_point_bandwidth(&d2, perplexity).ok_or(Error::NoBandwidthSolution {
                point: i,
                perplexity,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BandwidthSpec::PerPoint(sigmas))
}

/// Perplexity of `p_j ∝ exp(-beta (d2_j - min d2))`.
fn perplexity_at_precision(d2: &[f64], d2_min: f64, beta: f64) -> f64 {
    let logs: Vec<f64> = d2.iter().map(|d| -beta * (d - d2_min)).collect();
    let lse = log_sum_exp(&logs);
    let entropy: f64 = logs
        .iter()
        .map(|l| {
            let p = (l - lse).exp();
            if p > 0.0 {
                -p * (l - lse)
            } else {
                0.0
            }
        })
        .sum();
    entropy.exp()
}

fn solve_point_bandwidth(d2: &[f64], target: f64) -> Option<f64> {
    let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let d2_max = d2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = d2_max - d2_min;
    if spread <= 0.0 {
        // All neighbors equidistant: perplexity is N-1 for every bandwidth.
        let constant = d2.len() as f64;
        return ((target - constant).abs() <= PERPLEXITY_TOL).then(|| d2_min.sqrt().max(1.0));
    }
    // Perplexity decreases in beta and depends on beta * spread only.
    let mut lo = (1e-14 / spread).ln();
    let mut hi = (1e14 / spread).ln();
    let perp = |log_beta: f64| perplexity_at_precision(d2, d2_min, log_beta.exp());
    if target > perp(lo) + PERPLEXITY_TOL || target < perp(hi) - PERPLEXITY_TOL {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = perp(mid);
        if (p - target).abs() < 1e-12 {
            lo = mid;
            hi = mid;
            break;
        }
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_beta = 0.5 * (lo + hi);
    if (perp(log_beta) - target).abs() > PERPLEXITY_TOL {
        return None;
    }
    Some((0.5 / log_beta.exp()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model_1d(points: &[f64], kernel: Kernel, sigma: f64) -> KdeModel {
        KdeModel::new(
            DataSet::from_scalars(points).unwrap(),
            kernel,
            BandwidthSpec::Scalar(sigma),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_density_midpoint_of_pair() {
        let m = model_1d(&[0.0, 2.0], Kernel::Gaussian, 1.0);
        assert_relative_eq!(m.density(&[1.0]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(m.density(&[1.0]).unwrap(), 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn single_point_peak_is_one() {
        let m = model_1d(&[3.5], Kernel::Gaussian, 0.7);
        assert_eq!(m.density(&[3.5]).unwrap(), 1.0);
    }

    #[test]
    fn epanechnikov_density_hand_value() {
        let m = model_1d(&[0.0, 1.0, 5.0], Kernel::Epanechnikov, 2.0);
        assert_relative_eq!(m.density(&[0.5]).unwrap(), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = model_1d(&[0.0, 1.0], Kernel::Gaussian, 1.0);
        assert!(matches!(
            m.density(&[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.gradient(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn gradient_hand_values() {
        let m = model_1d(&[-1.0, 1.0], Kernel::Gaussian, 1.0);
        assert_eq!(m.gradient(&[0.0]).unwrap()[0], 0.0);
        let m = model_1d(&[0.0], Kernel::Gaussian, 1.0);
        let g = m.gradient(&[0.5]).unwrap()[0];
        assert_relative_eq!(g, -0.5 * (-0.125f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(g, -0.4412, epsilon = 1e-4);
    }

    #[test]
    fn hessian_of_symmetric_pair_is_negative() {
        // At sigma = 1 the curvature at 0 vanishes exactly (the two bumps
        // merge there), so use a slightly wider kernel.
        let m = model_1d(&[-1.0, 1.0], Kernel::Gaussian, 1.5);
        assert_eq!(
            model_1d(&[-1.0, 1.0], Kernel::Gaussian, 1.0)
                .hessian(&[0.0])
                .unwrap()[(0, 0)],
            0.0
        );
        let h = m.hessian(&[0.0]).unwrap()[(0, 0)];
        let fd = {
            let e = 1e-4;
            (m.density(&[e]).unwrap() - 2.0 * m.density(&[0.0]).unwrap()
                + m.density(&[-e]).unwrap())
                / (e * e)
        };
        assert!(h < 0.0);
        assert_relative_eq!(h, fd, max_relative = 1e-6);
    }

    #[test]
    fn hessian_rejects_epanechnikov() {
        let m = model_1d(&[0.0, 1.0], Kernel::Epanechnikov, 1.0);
        assert!(matches!(
            m.hessian(&[0.5]),
            Err(Error::UnsupportedKernel(_))
        ));
        assert!(matches!(
            m.local_covariance(&[0.5]),
            Err(Error::UnsupportedKernel(_))
        ));
    }

    #[test]
    fn local_covariance_edge_cases() {
        let m = model_1d(&[2.0], Kernel::Gaussian, 1.0);
        assert_eq!(m.local_covariance(&[0.3]).unwrap()[(0, 0)], 0.0);
        let m = model_1d(&[-1.0, 1.0], Kernel::Gaussian, 10.0);
        assert_relative_eq!(
            m.local_covariance(&[0.0]).unwrap()[(0, 0)],
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn normalized_density_of_single_point() {
        let m = model_1d(&[0.0], Kernel::Gaussian, 2.0);
        let expect = 1.0 / (2.0 * std::f64::consts::PI * 4.0).sqrt();
        assert_relative_eq!(
            m.normalized_density(&[0.0]).unwrap(),
            expect,
            epsilon = 1e-15
        );
    }

    #[test]
    fn weights_are_normalized() {
        let m = model_1d(&[0.0, 1.0], Kernel::Gaussian, 1.0)
            .with_weights(vec![1.0, 3.0])
            .unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
        let m = model_1d(&[0.0, 1.0], Kernel::Gaussian, 1.0);
        assert!(m.with_weights(vec![-1.0, 1.0]).is_err());
    }

    #[test]
    fn bandwidth_validation() {
        let d = DataSet::from_scalars(&[0.0, 1.0]).unwrap();
        assert!(KdeModel::new(d.clone(), Kernel::Gaussian, BandwidthSpec::Scalar(0.0)).is_err());
        assert!(KdeModel::new(
            d.clone(),
            Kernel::Gaussian,
            BandwidthSpec::PerPoint(vec![1.0])
        )
        .is_err());
        assert!(KdeModel::new(
            d,
            Kernel::Gaussian,
            BandwidthSpec::PerPoint(vec![1.0, f64::NAN])
        )
        .is_err());
    }

    /// Independent perplexity evaluation straight from the bandwidth.
    fn perplexity_oracle(data: &DataSet, i: usize, sigma: f64) -> f64 {
        let logs: Vec<f64> = (0..data.len())
            .filter(|&j| j != i)
            .map(|j| -sq_dist(data.point(i), data.point(j)) / (2.0 * sigma * sigma))
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        let h: f64 = logs
            .iter()
            .map(|l| {
                let p = (l - m).exp() / z;
                if p > 0.0 {
                    -p * p.log2()
                } else {
                    0.0
                }
            })
            .sum();
        2f64.powf(h)
    }

    #[test]
    fn entropic_bandwidths_reproduce_perplexity() {
        let d = DataSet::from_scalars(&[0.0, 1.0, 3.0]).unwrap();
        let sig = entropic_bandwidths(&d, 1.5).unwrap();
        for i in 0..3 {
            assert!((perplexity_oracle(&d, i, sig.get(i)) - 1.5).abs() < 1e-6);
        }
    }

    #[test]
    fn entropic_bandwidth_at_uniform_limit() {
        let d = DataSet::from_scalars(&[0.0, 1.0, 3.0, 7.0]).unwrap();
        let sig = entropic_bandwidths(&d, 3.0).unwrap();
        for i in 0..4 {
            assert!(sig.get(i).is_finite());
            assert!((perplexity_oracle(&d, i, sig.get(i)) - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn entropic_bandwidth_equidistant_neighbors_fail() {
        let d = DataSet::from_scalars(&[0.0, -1.0, 1.0]).unwrap();
        match entropic_bandwidths(&d, 1.5) {
            Err(Error::NoBandwidthSolution { point, .. }) => assert_eq!(point, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn entropic_bandwidth_rejects_out_of_range_perplexity() {
        let d = DataSet::from_scalars(&[0.0, 1.0, 3.0]).unwrap();
        assert!(matches!(
            entropic_bandwidths(&d, 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            entropic_bandwidths(&d, 2.5),
            Err(Error::InvalidInput(_))
        ));
        let dup = DataSet::from_scalars(&[0.0, 0.0, 3.0]).unwrap();
        assert!(matches!(
            entropic_bandwidths(&dup, 1.5),
            Err(Error::InvalidInput(_))
        ));
    }

    fn random_model() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>)> {
        (2usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0f64..5.0, 2 * n),
                0.3f64..3.0,
                prop::collection::vec(-6.0f64..6.0, 2),
            )
        })
    }

    proptest! {
        #[test]
        fn gradient_and_hessian_match_finite_differences((pts, sigma, x) in random_model()) {
            let n = pts.len() / 2;
            let data = DataSet::new(DMatrix::from_vec(2, n, pts)).unwrap();
            let m = KdeModel::gaussian(data, sigma).unwrap();
            let g = m.gradient(&x).unwrap();
            let h = m.hessian(&x).unwrap();
            let step = 1e-5 * sigma;
            let scale_g = g.norm().max(m.density(&x).unwrap() / sigma);
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (m.density(&xp).unwrap() - m.density(&xm).unwrap()) / (2.0 * step);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * scale_g.max(1e-300));
                let gd = (m.gradient(&xp).unwrap() - m.gradient(&xm).unwrap()) / (2.0 * step);
                let scale_h = h.norm().max(m.density(&x).unwrap() / (sigma * sigma));
                for j in 0..2 {
                    prop_assert!((gd[j] - h[(j, i)]).abs() <= 1e-5 * scale_h.max(1e-300));
                }
            }
            prop_assert_eq!(h[(0, 1)], h[(1, 0)]);
        }

        #[test]
        fn posteriors_sum_to_one((pts, sigma, x) in random_model()) {
            let n = pts.len() / 2;
            let data = DataSet::new(DMatrix::from_vec(2, n, pts)).unwrap();
            let m = KdeModel::gaussian(data, sigma).unwrap();
            let p = m.posteriors(&x).unwrap();
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let c = m.local_covariance(&x).unwrap();
            let eig = c.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|e| *e >= -1e-12));
        }

        #[test]
        fn density_nonnegative(pts in prop::collection::vec(-5.0f64..5.0, 1..20), x in -8.0f64..8.0, s in 0.1f64..3.0) {
            for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
                let m = KdeModel::new(DataSet::from_scalars(&pts).unwrap(), kernel, BandwidthSpec::Scalar(s)).unwrap();
                prop_assert!(m.density(&[x]).unwrap() >= 0.0);
            }
        }

        #[test]
        fn kernel_profiles_non_increasing(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for k in [Kernel::Gaussian, Kernel::Epanechnikov] {
                prop_assert!(k.profile(lo) >= k.profile(hi));
            }
            prop_assert!(Kernel::Gaussian.profile(hi) > 0.0);
            prop_assert!((Kernel::Gaussian.derivative(a) + 0.5 * Kernel::Gaussian.profile(a)).abs() < 1e-15);
        }
    }
}
