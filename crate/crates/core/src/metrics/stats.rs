use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::store::FeatureMatrix;

/// Rows per leaf of the reduction tree. Fixed so results do not depend on
/// the thread count.
const CHUNK: usize = 256;

/// Gaussian fit of a feature distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub n: usize,
    pub mean: DVector<f64>,
    /// Unbiased (n − 1) sample covariance.
    pub cov: DMatrix<f64>,
}

fn tree_sum<T: Send, F>(mut parts: Vec<T>, add: F) -> Option<T>
where
    F: Fn(T, T) -> T + Sync,
{
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => add(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop()
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn from_rows<R: AsRef<[f32]> + Sync>(rows: &[R]) -> Result<Self, MetricsError> {
        let n = rows.len();
        if n < 2 {
            return Err(MetricsError::BadArgument(format!(
                "need at least 2 rows for a covariance, got {n}"
            )));
        }
        let d = rows[0].as_ref().len();
        if rows.iter().any(|r| r.as_ref().len() != d) {
            return Err(MetricsError::BadArgument("ragged feature rows".into()));
        }
        let block =
            |chunk: &[R]| DMatrix::from_fn(chunk.len(), d, |i, j| f64::from(chunk[i].as_ref()[j]));

        let sums: Vec<DVector<f64>> = rows
            .par_chunks(CHUNK)
            .map(|c| block(c).row_sum().transpose())
            .collect();
        let mean = tree_sum(sums, |a, b| a + b).unwrap() / n as f64;

        let grams: Vec<DMatrix<f64>> = rows
            .par_chunks(CHUNK)
            .map(|c| {
                let mut x = block(c);
                for mut row in x.row_iter_mut() {
                    row -= mean.transpose();
                }
                x.transpose() * x
            })
            .collect();
        let mut cov = tree_sum(grams, |a, b| a + b).unwrap() / (n - 1) as f64;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { n, mean, cov })
    }

    pub fn from_matrix(m: &FeatureMatrix) -> Result<Self, MetricsError> {
        let rows: Vec<&[f32]> = m.rows().collect();
        Self::from_rows(&rows)
    }
}
