use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A collection of `N` points in `R^D`, stored column-major (one column per point).
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    points: DMatrix<f64>,
}

impl DataSet {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::invalid(
                "data points must have at least one dimension",
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contains non-finite values"));
        }
        Ok(Self { points })
    }

    /// Builds a dataset from row vectors, one per point.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows have inconsistent lengths"));
        }
        if d == 0 {
            return Err(Error::invalid(
                "data points must have at least one dimension",
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_vec(d, rows.len(), flat))
    }

    /// One-dimensional dataset from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn point(&self, n: usize) -> &[f64] {
        let d = self.dim();
        &self.points.as_slice()[n * d..(n + 1) * d]
    }

    pub fn point_vec(&self, n: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(n))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.as_slice().chunks_exact(self.dim())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.points
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Largest pairwise Euclidean distance.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for a in 0..n {
            for b in a + 1..n {
                best = best.max(sq_dist(self.point(a), self.point(b)));
            }
        }
        best.sqrt()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
