//! Texture-object association values: the mean object-classifier
//! probability over all images of a texture class.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{FeatureKind, FeatureMatrix, ImageRecord, StoreError};

/// Tolerance on each probability row summing to one.
pub const SIMPLEX_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum TavError {
    #[error("probability row for image {image_id} sums to {sum}")]
    NotSimplex { image_id: u64, sum: f64 },
    #[error("{labels} labels for {dim} classifier outputs")]
    LabelCount { labels: usize, dim: usize },
    #[error("expected classifier_probs features, found {0}")]
    WrongKind(FeatureKind),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationTable {
    pub objects: Vec<String>,
    pub textures: Vec<String>,
    /// `values[t][o]`, one row per entry of `textures`.
    pub values: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub object: String,
    pub value: f64,
}

/// `class_0`, `class_1`, … for unlabeled classifiers.
pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class_{i}")).collect()
}

/// One label per non-empty line.
pub fn read_labels(path: &Path) -> Result<Vec<String>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Mean classifier probabilities per texture class over the unflagged
/// records given. Rows are summed in ascending image id order.
pub fn compute_tav(
    records: &[ImageRecord],
    probs: &FeatureMatrix,
    labels: &[String],
) -> Result<AssociationTable, TavError> {
    if probs.kind() != FeatureKind::ClassifierProbs {
        return Err(TavError::WrongKind(probs.kind()));
    }
    if labels.len() != probs.dim() {
        return Err(TavError::LabelCount {
            labels: labels.len(),
            dim: probs.dim(),
        });
    }
    let mut by_class: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.flagged) {
        by_class
            .entry(r.texture_class())
            .or_default()
            .push(r.image_id);
    }
    let mut table = AssociationTable {
        objects: labels.to_vec(),
        textures: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
        warnings: Vec::new(),
    };
    for (class, mut ids) in by_class {
        ids.sort_unstable();
        let mut sum = vec![0.0; probs.dim()];
        let mut n = 0;
        for id in ids {
            let Some(row) = probs.row_of(id) else {
                table
                    .warnings
                    .push(format!("image {id} ({class}) has no probability row"));
                continue;
            };
            let total: f64 = row.iter().map(|&v| f64::from(v)).sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(TavError::NotSimplex {
                    image_id: id,
                    sum: total,
                });
            }
            sum.iter_mut()
                .zip(row)
                .for_each(|(s, &v)| *s += f64::from(v));
            n += 1;
        }
        if n == 0 {
            table.warnings.push(format!(
                "texture class `{class}` has no images; row omitted"
            ));
            continue;
        }
        table.textures.push(class.to_string());
        table
            .values
            .push(sum.into_iter().map(|s| s / n as f64).collect());
        table.counts.push(n);
    }
    for w in &table.warnings {
        log::warn!("{w}");
    }
    Ok(table)
}

/// The `k` strongest objects per texture class, descending by value with
/// ties broken by ascending label. `k` is capped at the number of objects.
pub fn top_k_associations(
    table: &AssociationTable,
    k: usize,
) -> BTreeMap<String, Vec<Association>> {
    let mut out = BTreeMap::new();
    for (texture, row) in table.textures.iter().zip(&table.values) {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            row[b]
                .total_cmp(&row[a])
                .then_with(|| table.objects[a].cmp(&table.objects[b]))
        });
        let top = order
            .into_iter()
            .take(k)
            .map(|o| Association {
                object: table.objects[o].clone(),
                value: row[o],
            })
            .collect();
        out.insert(texture.clone(), top);
    }
    out
}

/// Bar-chart-ready CSV: `texture,rank,object,value`.
pub fn top_k_csv(top: &BTreeMap<String, Vec<Association>>) -> Result<String, TavError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["texture", "rank", "object", "value"])?;
    for (texture, assocs) in top {
        for (rank, a) in assocs.iter().enumerate() {
            w.write_record([
                texture.as_str(),
                &(rank + 1).to_string(),
                &a.object,
                &format!("{:.6}", a.value),
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{PromptRecord, Slots};

    fn rec(id: u64, texture: &str) -> ImageRecord {
        let p = PromptRecord {
            prompt_id: id,
            slots: Slots {
                texture: texture.into(),
                ..Slots::default()
            },
            template_id: 0,
            text: String::new(),
        };
        ImageRecord::from_prompt(&p, id, id, 1)
    }

    fn probs(rows: &[Vec<f32>], ids: &[u64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(FeatureKind::ClassifierProbs, rows[0].len(), rows, ids).unwrap()
    }

    #[test]
    fn hand_mean() {
        let rs = [rec(0, "braided"), rec(1, "braided")];
        let m = probs(&[vec![0.6, 0.4], vec![0.2, 0.8]], &[0, 1]);
        let t = compute_tav(&rs, &m, &["knot".into(), "wig".into()]).unwrap();
        assert!((t.values[0][0] - 0.4).abs() < 1e-7);
        assert!((t.values[0][1] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn uniform_row_ties_go_alphabetical() {
        let rs = [rec(0, "dotted")];
        let m = probs(&[vec![0.25; 4]], &[0]);
        let labels: Vec<String> = ["d", "b", "c", "a"].iter().map(|s| s.to_string()).collect();
        let t = compute_tav(&rs, &m, &labels).unwrap();
        let top = top_k_associations(&t, 3);
        let names: Vec<&str> = top["dotted"].iter().map(|a| a.object.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "c"]);
        assert_eq!(top_k_associations(&t, 10)["dotted"].len(), 4);
    }

    #[test]
    fn non_simplex_rows_rejected() {
        let m = probs(&[vec![0.5, 0.6]], &[0]);
        assert!(matches!(
            compute_tav(&[rec(0, "x")], &m, &default_labels(2)),
            Err(TavError::NotSimplex { .. })
        ));
    }

    #[test]
    fn csv_quotes_labels_with_commas() {
        let rs = [rec(0, "knitted")];
        let m = probs(&[vec![1.0, 0.0]], &[0]);
        let t = compute_tav(&rs, &m, &["tench, Tinca tinca".into(), "b".into()]).unwrap();
        let csv = top_k_csv(&top_k_associations(&t, 1)).unwrap();
        assert_eq!(
            csv,
            "texture,rank,object,value\nknitted,1,\"tench, Tinca tinca\",1.000000\n"
        );
    }
}
