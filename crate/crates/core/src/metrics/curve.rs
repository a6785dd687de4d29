use serde::{Deserialize, Serialize};

/// Linear-interpolation quantile of sorted data (`h = (n − 1)·q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `0.05, 0.10, …, 1.00`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub q: f64,
    pub threshold: f64,
    pub n: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    /// Grid values whose bucket held no rated image.
    pub empty: Vec<f64>,
}

/// Mean human score of rated images whose CLIP score is at most the
/// `q`-quantile of `population` (the rated images' own scores by default).
///
/// `rated` holds `(clip_score, human_score)` pairs.
pub fn human_vs_clip_curve(
    rated: &[(f64, f64)],
    population: Option<&[f64]>,
    grid: &[f64],
) -> Curve {
    if rated.is_empty() {
        return Curve::default();
    }
    let mut pop: Vec<f64> = match population {
        Some(p) if !p.is_empty() => p.to_vec(),
        _ => rated.iter().map(|r| r.0).collect(),
    };
    pop.sort_by(f64::total_cmp);
    let mut curve = Curve::default();
    for &q in grid {
        let threshold = quantile_sorted(&pop, q);
        let bucket: Vec<f64> = rated
            .iter()
            .filter(|r| r.0 <= threshold)
            .map(|r| r.1)
            .collect();
        if bucket.is_empty() {
            curve.empty.push(q);
            continue;
        }
        curve.points.push(CurvePoint {
            q,
            threshold,
            n: bucket.len(),
            mean: bucket.iter().sum::<f64>() / bucket.len() as f64,
        });
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    }

    #[test]
    fn full_quantile_is_global_mean() {
        let rated = [(1.0, 2.0), (3.0, 4.0), (2.0, 3.0)];
        let c = human_vs_clip_curve(&rated, None, &[1.0]);
        assert_eq!(c.points[0].mean, 3.0);
        assert_eq!(c.points[0].n, 3);
    }

    #[test]
    fn monotone_data_gives_monotone_curve() {
        let rated: Vec<(f64, f64)> = (0..50)
            .map(|i| (i as f64, 1.0 + i as f64 / 49.0 * 4.0))
            .collect();
        let c = human_vs_clip_curve(&rated, None, &default_grid());
        assert!(c.points.windows(2).all(|w| w[0].mean <= w[1].mean));
    }

    #[test]
    fn bucket_below_rated_scores_is_omitted() {
        let pop: Vec<f64> = (0..100).map(f64::from).collect();
        let rated = [(50.0, 3.0), (90.0, 4.0)];
        let c = human_vs_clip_curve(&rated, Some(&pop), &[0.1, 1.0]);
        assert_eq!(c.empty, vec![0.1]);
        assert_eq!(c.points.len(), 1);
        assert!(human_vs_clip_curve(&[], None, &[1.0]).points.is_empty());
    }
}
