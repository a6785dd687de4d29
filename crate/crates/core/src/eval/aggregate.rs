use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, RatingRecord};
use crate::metrics::{human_vs_clip_curve, Curve};
use crate::refine::Stage;
use crate::store::ImageRecord;

/// Cumulative refinement buckets, each nested in the previous one.
pub const BUCKETS: [&str; 4] = ["None", "+Freq", "+PatchVar", "+CLIP"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub n: usize,
    /// `None` for an empty bucket.
    pub quality: Option<f64>,
    pub representativeness: Option<f64>,
    /// Change from the previous bucket's mean.
    pub delta_quality: Option<f64>,
    pub delta_representativeness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTable {
    pub rows: Vec<StageRow>,
    /// Relative change of the last bucket's means over the first.
    pub relative_quality: Option<f64>,
    pub relative_representativeness: Option<f64>,
}

/// `(to − from) / from`.
pub fn relative_change(from: f64, to: f64) -> f64 {
    (to - from) / from
}

/// A fraction as a percentage with one decimal, e.g. `3.4%`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", 100.0 * fraction)
}

fn bucket_depth(r: &ImageRecord) -> Result<usize, EvalError> {
    let mut depth = 0;
    for stage in Stage::ORDER {
        match stage.survival(r) {
            Some(true) => depth += 1,
            Some(false) => break,
            None => {
                return Err(EvalError::Unrefined {
                    image_id: r.image_id,
                })
            }
        }
    }
    Ok(depth)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean ratings per cumulative stage bucket. `ratings` should already be
/// resolved (one per session and image); every rating is one observation.
pub fn aggregate_by_stage(
    ratings: &[RatingRecord],
    records: &[ImageRecord],
) -> Result<StageTable, EvalError> {
    let by_id: HashMap<u64, &ImageRecord> = records.iter().map(|r| (r.image_id, r)).collect();
    let mut q: [Vec<f64>; 4] = Default::default();
    let mut rep: [Vec<f64>; 4] = Default::default();
    for rating in ratings {
        let rec = by_id
            .get(&rating.image_id)
            .ok_or(EvalError::UnknownImage(rating.image_id))?;
        let depth = bucket_depth(rec)?;
        for b in 0..=depth {
            q[b].push(f64::from(rating.quality));
            rep[b].push(f64::from(rating.representativeness));
        }
    }
    let mut rows: Vec<StageRow> = Vec::with_capacity(4);
    for b in 0..4 {
        let (mq, mr) = (mean(&q[b]), mean(&rep[b]));
        let prev = rows.last();
        rows.push(StageRow {
            stage: BUCKETS[b].to_string(),
            n: q[b].len(),
            quality: mq,
            representativeness: mr,
            delta_quality: prev.and_then(|p| Some(mq? - p.quality?)),
            delta_representativeness: prev.and_then(|p| Some(mr? - p.representativeness?)),
        });
    }
    let rel = |f: fn(&StageRow) -> Option<f64>| Some(relative_change(f(&rows[0])?, f(&rows[3])?));
    Ok(StageTable {
        relative_quality: rel(|r| r.quality),
        relative_representativeness: rel(|r| r.representativeness),
        rows,
    })
}

impl StageTable {
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "empty".to_string(), |v| format!("{v:.2}"));
        let fmt_d = |v: Option<f64>| v.map_or_else(|| "".to_string(), |v| format!("{v:+.2}"));
        let mut out = format!(
            "{:<10} {:>5} {:>8} {:>7} {:>8} {:>7}\n",
            "stage", "n", "quality", "delta", "repr.", "delta"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>5} {:>8} {:>7} {:>8} {:>7}\n",
                r.stage,
                r.n,
                fmt(r.quality),
                fmt_d(r.delta_quality),
                fmt(r.representativeness),
                fmt_d(r.delta_representativeness)
            ));
        }
        if let (Some(q), Some(r)) = (self.relative_quality, self.relative_representativeness) {
            out.push_str(&format!(
                "None -> +CLIP: quality {}, representativeness {}\n",
                format_percent(q),
                format_percent(r)
            ));
        }
        out
    }
}

/// Representativeness against CLIP score for every resolved rating, with
/// quantiles taken over the CLIP scores of all unflagged scored records.
pub fn rating_curve(
    ratings: &[RatingRecord],
    records: &[ImageRecord],
    grid: &[f64],
) -> Result<Curve, EvalError> {
    let by_id: HashMap<u64, &ImageRecord> = records.iter().map(|r| (r.image_id, r)).collect();
    let rated = ratings
        .iter()
        .map(|rating| {
            let rec = by_id
                .get(&rating.image_id)
                .ok_or(EvalError::UnknownImage(rating.image_id))?;
            let clip = rec.stage_scores.clip.ok_or(EvalError::NoClipScore {
                image_id: rating.image_id,
            })?;
            Ok((clip, f64::from(rating.representativeness)))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let population: Vec<f64> = records
        .iter()
        .filter(|r| !r.flagged)
        .filter_map(|r| r.stage_scores.clip)
        .collect();
    Ok(human_vs_clip_curve(&rated, Some(&population), grid))
}
