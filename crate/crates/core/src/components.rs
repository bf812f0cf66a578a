//! Connected components of the epsilon-ball graph (edge iff `d < eps`).
//!
//! [`cc_naive`] is exact for any data. [`cc_tight`] links each point to the
//! first component representative within `eps` and runs in `O(DNK)`; it
//! agrees with [`cc_naive`] whenever `eps` exceeds every within-component
//! diameter and is below every between-component gap. When that assumption
//! fails (for example a chain of points each within `eps` of the next) the
//! two can disagree.

use crate::data::DataSet;
use crate::error::{Error, Result};

pub trait Metric {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;

    /// `distance(a, b) < eps`.
    fn within(&self, a: &[f64], b: &[f64], eps: f64) -> bool {
        self.distance(a, b) < eps
    }
}

/// Euclidean distance with dimension-wise early exit in [`Metric::within`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Metric for Euclidean {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::data::sq_dist(a, b).sqrt()
    }

    #[inline]
    fn within(&self, a: &[f64], b: &[f64], eps: f64) -> bool {
        let limit = eps * eps;
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += (x - y) * (x - y);
            if acc >= limit {
                return false;
            }
        }
        acc < limit
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CcResult {
    pub labels: Vec<usize>,
    /// Index of the representative point of each component.
    pub representatives: Vec<usize>,
}

impl CcResult {
    pub fn num_components(&self) -> usize {
        self.representatives.len()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "merge threshold must be positive and finite, got {eps}"
        )))
    }
}

/// Exact components by depth-first search over all pairs.
pub fn cc_naive(points: &DataSet, metric: &impl Metric, eps: f64) -> Result<CcResult> {
    check_eps(eps)?;
    let n = points.len();
    let mut labels = vec![usize::MAX; n];
    let mut representatives = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        let k = representatives.len();
        representatives.push(start);
        labels[start] = k;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for (u, label) in labels.iter_mut().enumerate() {
                if *label == usize::MAX && metric.within(points.point(v), points.point(u), eps) {
                    *label = k;
                    stack.push(u);
                }
            }
        }
    }
    Ok(CcResult {
        labels,
        representatives,
    })
}

/// Representative-based components under the tight-clusters assumption.
pub fn cc_tight(points: &DataSet, metric: &impl Metric, eps: f64) -> Result<CcResult> {
    check_eps(eps)?;
    let mut online = OnlineComponents::new(points.dim(), eps);
    let labels = points.iter().map(|p| online.assign(metric, p)).collect();
    let representatives = online.representative_indices;
    Ok(CcResult {
        labels,
        representatives,
    })
}

/// [`cc_tight`] that tries the previous point's component first. Same result
/// under the tight-clusters assumption; most comparisons are skipped for
/// data in raster order.
pub fn cc_tight_raster(points: &DataSet, metric: &impl Metric, eps: f64) -> Result<CcResult> {
    check_eps(eps)?;
    let mut online = OnlineComponents::new(points.dim(), eps);
    let labels = points
        .iter()
        .map(|p| online.assign_with_hint(metric, p))
        .collect();
    let representatives = online.representative_indices;
    Ok(CcResult {
        labels,
        representatives,
    })
}

/// Incremental tight-clusters components over a stream of points.
#[derive(Debug, Clone)]
pub struct OnlineComponents {
    dim: usize,
    eps: f64,
    representatives: Vec<f64>,
    representative_indices: Vec<usize>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    seen: usize,
    last: Option<usize>,
}

impl OnlineComponents {
    pub fn new(dim: usize, eps: f64) -> Self {
        Self {
            dim,
            eps,
            representatives: Vec::new(),
            representative_indices: Vec::new(),
            sums: Vec::new(),
            counts: Vec::new(),
            seen: 0,
            last: None,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn representative(&self, k: usize) -> &[f64] {
        &self.representatives[k * self.dim..(k + 1) * self.dim]
    }

    /// Component of `p` if one is within `eps`, without inserting it.
    pub fn find(&self, metric: &impl Metric, p: &[f64]) -> Option<usize> {
        (0..self.len()).find(|&k| metric.within(p, self.representative(k), self.eps))
    }

    pub fn assign(&mut self, metric: &impl Metric, p: &[f64]) -> usize {
        let k = self.find(metric, p);
        self.insert(p, k)
    }

    pub fn assign_with_hint(&mut self, metric: &impl Metric, p: &[f64]) -> usize {
        let k = match self.last {
            Some(k) if metric.within(p, self.representative(k), self.eps) => Some(k),
            _ => self.find(metric, p),
        };
        self.insert(p, k)
    }

    fn insert(&mut self, p: &[f64], k: Option<usize>) -> usize {
        let k = match k {
            Some(k) => k,
            None => {
                self.representatives.extend_from_slice(p);
                self.representative_indices.push(self.seen);
                self.sums.extend(std::iter::repeat_n(0.0, self.dim));
                self.counts.push(0);
                self.len() - 1
            }
        };
        for (s, v) in self.sums[k * self.dim..(k + 1) * self.dim]
            .iter_mut()
            .zip(p)
        {
            *s += v;
        }
        self.counts[k] += 1;
        self.seen += 1;
        self.last = Some(k);
        k
    }

    /// Mean of the members of each component.
    pub fn means(&self) -> Vec<Vec<f64>> {
        self.sums
            .chunks_exact(self.dim.max(1))
            .zip(&self.counts)
            .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        let n = a.len();
        (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn separated_pairs() {
        let d = DataSet::from_scalars(&[0.0, 0.1, 5.0, 5.1]).unwrap();
        let naive = cc_naive(&d, &Euclidean, 0.5).unwrap();
        assert_eq!(naive.labels, vec![0, 0, 1, 1]);
        assert_eq!(cc_tight(&d, &Euclidean, 0.5).unwrap().labels, naive.labels);
        assert_eq!(
            cc_tight_raster(&d, &Euclidean, 0.5).unwrap().labels,
            naive.labels
        );
    }

    #[test]
    fn large_eps_gives_one_component() {
        let d = DataSet::from_scalars(&[0.0, 0.1, 5.0, 5.1]).unwrap();
        assert_eq!(cc_naive(&d, &Euclidean, 10.0).unwrap().num_components(), 1);
    }

    #[test]
    fn chain_is_transitive_for_naive_only() {
        let d = DataSet::from_scalars(&[0.0, 0.4, 0.8]).unwrap();
        assert_eq!(cc_naive(&d, &Euclidean, 0.5).unwrap().num_components(), 1);
        // The chain violates the tight-clusters assumption, so the
        // representative scheme is free to split it.
        let tight = cc_tight(&d, &Euclidean, 0.5).unwrap();
        assert!(tight.num_components() >= 1);
        assert_eq!(tight.labels[0], tight.labels[1]);
    }

    #[test]
    fn edges_use_strict_inequality() {
        let d = DataSet::from_scalars(&[0.0, 0.5]).unwrap();
        assert_eq!(cc_naive(&d, &Euclidean, 0.5).unwrap().num_components(), 2);
        assert_eq!(cc_tight(&d, &Euclidean, 0.5).unwrap().num_components(), 2);
    }

    #[test]
    fn representatives_are_members() {
        let d = DataSet::from_scalars(&[3.0, 0.0, 3.1, 0.05]).unwrap();
        for r in [
            cc_naive(&d, &Euclidean, 0.5).unwrap(),
            cc_tight(&d, &Euclidean, 0.5).unwrap(),
        ] {
            for (k, &rep) in r.representatives.iter().enumerate() {
                assert_eq!(r.labels[rep], k);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let d = DataSet::from_scalars(&[0.0]).unwrap();
        assert!(cc_naive(&d, &Euclidean, 0.0).is_err());
        assert!(cc_tight(&d, &Euclidean, -1.0).is_err());
    }

    #[test]
    fn online_means() {
        let mut oc = OnlineComponents::new(1, 0.5);
        for v in [0.0, 0.2, 4.0] {
            oc.assign(&Euclidean, &[v]);
        }
        assert_eq!(oc.means(), vec![vec![0.1], vec![4.0]]);
    }

    proptest! {
        #[test]
        fn early_exit_matches_full_distance(
            a in prop::collection::vec(-3.0f64..3.0, 4),
            b in prop::collection::vec(-3.0f64..3.0, 4),
            eps in 0.01f64..6.0,
        ) {
            let full = crate::data::sq_dist(&a, &b) < eps * eps;
            prop_assert_eq!(Euclidean.within(&a, &b, eps), full);
        }

        #[test]
        fn naive_is_permutation_invariant(
            pts in prop::collection::vec(-5.0f64..5.0, 1..30),
            eps in 0.1f64..2.0,
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| pts[i]).collect();
            let a = cc_naive(&DataSet::from_scalars(&pts).unwrap(), &Euclidean, eps).unwrap();
            let b = cc_naive(&DataSet::from_scalars(&shuffled).unwrap(), &Euclidean, eps).unwrap();
            let b_back: Vec<usize> = {
                let mut v = vec![0; pts.len()];
                for (pos, &i) in perm.iter().enumerate() {
                    v[i] = b.labels[pos];
                }
                v
            };
            prop_assert!(same_partition(&a.labels, &b_back));
        }
    }
}
