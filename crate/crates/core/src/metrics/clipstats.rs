use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::prompt::Category;
use crate::store::ImageRecord;

/// Category order used to name pair families, texture first.
const FAMILY_ORDER: [Category; 5] = [
    Category::Texture,
    Category::Artistic,
    Category::Spatial,
    Category::Enhancer,
    Category::Color,
];

/// The ten unordered category pairs.
pub fn pair_families() -> Vec<(Category, Category)> {
    let mut out = Vec::with_capacity(10);
    for (i, &a) in FAMILY_ORDER.iter().enumerate() {
        for &b in &FAMILY_ORDER[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// Slot label: the word itself, or `∅(category)` for an empty slot.
pub fn slot_label(record: &ImageRecord, category: Category) -> String {
    match record.slots.get(category) {
        "" => format!("∅({})", category.name()),
        w => w.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    /// e.g. `texture×color`.
    pub family: String,
    pub first: String,
    pub second: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// CLIP score mean, median and count for every co-occurring word pair across
/// all ten category families, over the unflagged records given. Sorted by
/// mean descending, then family and labels.
pub fn clip_stats_by_pair(records: &[ImageRecord]) -> Result<Vec<PairStat>, MetricsError> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.flagged) {
        let score = r.stage_scores.clip.ok_or(MetricsError::MissingScore {
            image_id: r.image_id,
        })?;
        for (a, b) in pair_families() {
            let family = format!("{}×{}", a.name(), b.name());
            groups
                .entry((family, slot_label(r, a), slot_label(r, b)))
                .or_default()
                .push(score);
        }
    }
    let mut out: Vec<PairStat> = groups
        .into_iter()
        .map(|((family, first, second), mut v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            PairStat {
                family,
                first,
                second,
                n,
                mean,
                median: median(&mut v),
            }
        })
        .collect();
    out.sort_by(|x, y| {
        y.mean
            .total_cmp(&x.mean)
            .then_with(|| (&x.family, &x.first, &x.second).cmp(&(&y.family, &y.first, &y.second)))
    });
    Ok(out)
}

/// First `k` and last `k` rows of a table sorted by [`clip_stats_by_pair`],
/// optionally restricted to one family and to pairs with at least `min_n` images.
pub fn top_bottom(
    table: &[PairStat],
    k: usize,
    family: Option<&str>,
    min_n: usize,
) -> (Vec<PairStat>, Vec<PairStat>) {
    let rows: Vec<&PairStat> = table
        .iter()
        .filter(|p| family.is_none_or(|f| p.family == f) && p.n >= min_n)
        .collect();
    let top = rows.iter().take(k).map(|p| (*p).clone()).collect();
    let bottom = rows
        .iter()
        .rev()
        .take(k)
        .rev()
        .map(|p| (*p).clone())
        .collect();
    (top, bottom)
}
