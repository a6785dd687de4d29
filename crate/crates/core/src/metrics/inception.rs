use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::store::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ISResult {
    pub split_scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over splits.
    pub std: f64,
    pub n_splits: usize,
}

/// Numerically stable softmax in `f64`.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    let e: Vec<f64> = logits.iter().map(|&v| (f64::from(v) - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Inception Score from class probability rows. Splits are contiguous row
/// ranges of near-equal size.
pub fn inception_score_from_probs(
    probs: &[Vec<f64>],
    n_splits: usize,
) -> Result<ISResult, MetricsError> {
    if n_splits == 0 || probs.len() < n_splits {
        return Err(MetricsError::BadArgument(format!(
            "{} rows cannot form {n_splits} splits",
            probs.len()
        )));
    }
    let c = probs[0].len();
    if probs.iter().any(|p| p.len() != c) {
        return Err(MetricsError::BadArgument("ragged probability rows".into()));
    }
    let n = probs.len();
    let split_scores: Vec<f64> = (0..n_splits)
        .map(|k| {
            let part = &probs[k * n / n_splits..(k + 1) * n / n_splits];
            let mut marginal = vec![0.0; c];
            for p in part {
                marginal.iter_mut().zip(p).for_each(|(m, &v)| *m += v);
            }
            marginal.iter_mut().for_each(|m| *m /= part.len() as f64);
            let mean_kl = part.iter().map(|p| kl(p, &marginal)).sum::<f64>() / part.len() as f64;
            mean_kl.exp()
        })
        .collect();
    let mean = split_scores.iter().sum::<f64>() / n_splits as f64;
    let var = split_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_splits as f64;
    Ok(ISResult {
        split_scores,
        mean,
        std: var.sqrt(),
        n_splits,
    })
}

/// Inception Score of a logits matrix (softmax applied per row).
pub fn inception_score(logits: &FeatureMatrix, n_splits: usize) -> Result<ISResult, MetricsError> {
    let probs: Vec<Vec<f64>> = logits.rows().map(softmax).collect();
    inception_score_from_probs(&probs, n_splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::FeatureKind;

    fn logits(rows: &[Vec<f32>]) -> FeatureMatrix {
        let ids: Vec<u64> = (0..rows.len() as u64).collect();
        FeatureMatrix::from_rows(FeatureKind::InceptionLogits, rows[0].len(), rows, &ids).unwrap()
    }

    #[test]
    fn identical_rows_score_one() {
        let m = logits(&vec![vec![0.3, -1.0, 2.0]; 20]);
        let r = inception_score(&m, 4).unwrap();
        assert!(r.split_scores.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn balanced_one_hot_scores_class_count() {
        let rows: Vec<Vec<f32>> = (0..100)
            .map(|i| {
                (0..10)
                    .map(|c| if c == i % 10 { 100.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let r = inception_score(&logits(&rows), 10).unwrap();
        assert!((r.mean - 10.0).abs() < 1e-6);
        assert!(r.std < 1e-9);
    }

    #[test]
    fn too_few_rows() {
        let m = logits(&vec![vec![0.0, 1.0]; 3]);
        assert!(matches!(
            inception_score(&m, 4),
            Err(MetricsError::BadArgument(_))
        ));
    }
}
