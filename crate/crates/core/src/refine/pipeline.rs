use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cut::{quantile_cut, Stage, StageReport};
use super::scores::{clip_score, patch_variance, DEFAULT_CLIP_SCALE, DEFAULT_PATCH};
use super::spectrum::{frequency_cutoff, radial_power_spectrum};
use super::{RefineError, ScoreError};
use crate::gray::GrayPlane;
use crate::store::{load_features_of, DatasetLayout, FeatureKind, FeatureMatrix, ImageRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeepFractions {
    pub freq: f64,
    pub patchvar: f64,
    pub clip: f64,
}

impl Default for KeepFractions {
    fn default() -> Self {
        Self::uniform(0.8)
    }
}

impl KeepFractions {
    pub fn uniform(f: f64) -> Self {
        Self {
            freq: f,
            patchvar: f,
            clip: f,
        }
    }

    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Freq => self.freq,
            Stage::PatchVar => self.patchvar,
            Stage::Clip => self.clip,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    pub fractions: KeepFractions,
    pub patch_size: usize,
    pub clip_scale: f64,
    /// Truncate every class to the smallest surviving class after the last stage.
    pub balance: bool,
    pub workers: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            fractions: KeepFractions::default(),
            patch_size: DEFAULT_PATCH,
            clip_scale: DEFAULT_CLIP_SCALE,
            balance: false,
            workers: rayon::current_num_threads(),
        }
    }
}

fn note_exclusion(record: &mut ImageRecord, stage: Stage, err: &dyn std::fmt::Display) {
    if record.excluded.is_none() {
        record.excluded = Some(format!("{stage}: {err}"));
    }
}

/// Fills `f_c` and/or `patch_var` for every unflagged record by decoding its
/// image under `layout`. Failures leave the score empty and record a reason.
pub fn score_images(
    records: &mut [ImageRecord],
    layout: &DatasetLayout,
    freq: bool,
    patchvar: bool,
    patch_size: usize,
) {
    records.par_iter_mut().filter(|r| !r.flagged).for_each(|r| {
        let plane = match r.file_path.as_deref() {
            Some(rel) => GrayPlane::open(&layout.resolve(rel)).map_err(ScoreError::from),
            None => Err(ScoreError::NoFile),
        };
        let plane = match plane {
            Ok(p) => p,
            Err(e) => {
                let stage = if freq { Stage::Freq } else { Stage::PatchVar };
                note_exclusion(r, stage, &e);
                return;
            }
        };
        if freq {
            match radial_power_spectrum(&plane).and_then(|s| frequency_cutoff(&s)) {
                Ok(fc) => r.stage_scores.f_c = Some(fc),
                Err(e) => note_exclusion(r, Stage::Freq, &e),
            }
        }
        if patchvar {
            match patch_variance(&plane, patch_size) {
                Ok(v) => r.stage_scores.patch_var = Some(v),
                Err(e) => note_exclusion(r, Stage::PatchVar, &e),
            }
        }
    });
}

/// Fills `clip` from image embeddings keyed by image id and text embeddings
/// keyed by prompt id.
pub fn score_clip(
    records: &mut [ImageRecord],
    clip_image: &FeatureMatrix,
    clip_text: &FeatureMatrix,
    scale: f64,
) -> Result<(), RefineError> {
    if clip_image.dim() != clip_text.dim() && !clip_image.is_empty() && !clip_text.is_empty() {
        return Err(ScoreError::DimMismatch(clip_image.dim(), clip_text.dim()).into());
    }
    for r in records.iter_mut().filter(|r| !r.flagged) {
        let (Some(img), Some(txt)) = (clip_image.row_of(r.image_id), clip_text.row_of(r.prompt_id))
        else {
            note_exclusion(r, Stage::Clip, &"missing embedding");
            continue;
        };
        match clip_score(img, txt, scale) {
            Ok(s) => r.stage_scores.clip = Some(s),
            Err(e) => note_exclusion(r, Stage::Clip, &e),
        }
    }
    Ok(())
}

/// Applies freq → patchvar → clip cuts over already-scored records.
pub fn refine_all(
    records: &mut [ImageRecord],
    fractions: KeepFractions,
) -> Result<Vec<StageReport>, RefineError> {
    Stage::ORDER
        .into_iter()
        .map(|stage| quantile_cut(records, stage, fractions.get(stage)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub per_class: usize,
    pub removed: BTreeMap<String, usize>,
}

/// Truncates every class's final survivors to the smallest class size,
/// keeping the highest CLIP scores (ties by ascending image id).
pub fn balance_classes(records: &mut [ImageRecord]) -> BalanceReport {
    let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.survives.clip == Some(true) {
            classes
                .entry(r.texture_class().to_string())
                .or_default()
                .push(i);
        }
    }
    let per_class = classes.values().map(Vec::len).min().unwrap_or(0);
    let mut removed = BTreeMap::new();
    for (class, mut members) in classes {
        members.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            let (sa, sb) = (
                ra.stage_scores.clip.unwrap_or(0.0),
                rb.stage_scores.clip.unwrap_or(0.0),
            );
            sb.total_cmp(&sa).then(ra.image_id.cmp(&rb.image_id))
        });
        let dropped = &members[per_class..];
        for &i in dropped {
            records[i].survives.clip = Some(false);
            records[i].excluded = Some(format!("balance: class truncated to {per_class}"));
        }
        removed.insert(class, dropped.len());
    }
    BalanceReport { per_class, removed }
}

/// Scores what `stages` need and applies their cuts in canonical order.
///
/// Image scores come from files under `layout`; CLIP scores from
/// `clip_image.ptdf` and `clip_text.ptdf` in `features_dir`.
pub fn run_refinement(
    records: &mut [ImageRecord],
    layout: &DatasetLayout,
    features_dir: &Path,
    stages: &[Stage],
    options: &RefineOptions,
) -> Result<Vec<StageReport>, RefineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| RefineError::Pool(e.to_string()))?;
    let wants = |s: Stage| stages.contains(&s);

    if wants(Stage::Freq) || wants(Stage::PatchVar) {
        pool.install(|| {
            score_images(
                records,
                layout,
                wants(Stage::Freq),
                wants(Stage::PatchVar),
                options.patch_size,
            )
        });
    }
    if wants(Stage::Clip) {
        let image = load_features_of(
            &features_dir.join(FeatureKind::ClipImage.file_name()),
            FeatureKind::ClipImage,
        )?;
        let text = load_features_of(
            &features_dir.join(FeatureKind::ClipText.file_name()),
            FeatureKind::ClipText,
        )?;
        score_clip(records, &image, &text, options.clip_scale)?;
    }

    let mut reports = Vec::new();
    for stage in Stage::ORDER.into_iter().filter(|s| wants(*s)) {
        reports.push(quantile_cut(records, stage, options.fractions.get(stage))?);
    }
    if options.balance && wants(Stage::Clip) {
        let b = balance_classes(records);
        log::info!("balanced to {} images per class", b.per_class);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{PromptRecord, Slots};

    fn scored(image_id: u64, class: &str, fc: u32, pv: f64, clip: f64) -> ImageRecord {
        let prompt = PromptRecord {
            prompt_id: image_id,
            slots: Slots {
                texture: class.into(),
                ..Slots::default()
            },
            template_id: 0,
            text: format!("{class} texture"),
        };
        let mut r = ImageRecord::from_prompt(&prompt, image_id, image_id, 1);
        r.stage_scores.f_c = Some(fc);
        r.stage_scores.patch_var = Some(pv);
        r.stage_scores.clip = Some(clip);
        r
    }

    #[test]
    fn thousand_per_class_cascade() {
        let mut rs: Vec<_> = (0..2000u64)
            .map(|i| {
                let class = if i % 2 == 0 { "a" } else { "b" };
                let x = crate::hash::mix64(i);
                scored(
                    i,
                    class,
                    (x % 97) as u32,
                    (x % 1009) as f64,
                    (x % 10007) as f64,
                )
            })
            .collect();
        let reports = refine_all(&mut rs, KeepFractions::default()).unwrap();
        let kept: Vec<usize> = reports.iter().map(|r| r.classes["a"].kept).collect();
        assert_eq!(kept, vec![800, 640, 512]);
        let kept: Vec<usize> = reports.iter().map(|r| r.classes["b"].kept).collect();
        assert_eq!(kept, vec![800, 640, 512]);
    }

    #[test]
    fn balance_truncates_to_smallest_class() {
        let mut rs: Vec<_> = (0..5u64)
            .map(|i| scored(i, if i < 3 { "a" } else { "b" }, 1, 1.0, i as f64))
            .collect();
        for r in &mut rs {
            r.survives.freq = Some(true);
            r.survives.patchvar = Some(true);
            r.survives.clip = Some(true);
        }
        let b = balance_classes(&mut rs);
        assert_eq!(b.per_class, 2);
        assert_eq!(b.removed["a"], 1);
        assert_eq!(rs[0].survives.clip, Some(false));
    }
}
