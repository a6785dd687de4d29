use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RefineError;
use crate::store::ImageRecord;

/// The three refinement stages, in application order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Freq,
    PatchVar,
    Clip,
}

impl Stage {
    pub const ORDER: [Stage; 3] = [Stage::Freq, Stage::PatchVar, Stage::Clip];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Freq => "freq",
            Stage::PatchVar => "patchvar",
            Stage::Clip => "clip",
        }
    }

    pub fn score(self, record: &ImageRecord) -> Option<f64> {
        let s = &record.stage_scores;
        match self {
            Stage::Freq => s.f_c.map(f64::from),
            Stage::PatchVar => s.patch_var,
            Stage::Clip => s.clip,
        }
    }

    pub fn survival(self, record: &ImageRecord) -> Option<bool> {
        let s = &record.survives;
        match self {
            Stage::Freq => s.freq,
            Stage::PatchVar => s.patchvar,
            Stage::Clip => s.clip,
        }
    }

    fn set_survival(self, record: &mut ImageRecord, value: Option<bool>) {
        let s = &mut record.survives;
        match self {
            Stage::Freq => s.freq = value,
            Stage::PatchVar => s.patchvar = value,
            Stage::Clip => s.clip = value,
        }
    }

    fn earlier(self) -> impl Iterator<Item = Stage> {
        Stage::ORDER.into_iter().take_while(move |&s| s != self)
    }

    fn later(self) -> impl Iterator<Item = Stage> {
        Stage::ORDER
            .into_iter()
            .skip_while(move |&s| s != self)
            .skip(1)
    }

    /// Whether `record` entered this stage: unflagged and kept by every
    /// earlier stage.
    pub fn admits(self, record: &ImageRecord) -> bool {
        !record.flagged && self.earlier().all(|s| s.survival(record) == Some(true))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ORDER
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// `⌈fraction · n⌉`, treating products within 1e-9 of an integer as exact so
/// that e.g. `0.7 · 10` keeps 7 rather than 8.
pub fn keep_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    (k.max(0.0) as usize).min(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCut {
    /// Records that entered the stage with a usable score.
    pub input: usize,
    pub kept: usize,
    /// Entered the stage but had no score.
    pub excluded: usize,
    /// Score of the last kept record.
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub keep_fraction: f64,
    pub classes: BTreeMap<String, ClassCut>,
    pub input_total: usize,
    pub kept_total: usize,
    pub retention: f64,
    pub warnings: Vec<String>,
}

impl StageReport {
    /// Plain-text table, one line per class.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "stage {} (keep {:.3})\n{:<20} {:>8} {:>8} {:>8} {:>14}\n",
            self.stage, self.keep_fraction, "class", "input", "kept", "excluded", "threshold"
        );
        for (class, c) in &self.classes {
            let threshold = c
                .threshold
                .map(|t| format!("{t:.4}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<20} {:>8} {:>8} {:>8} {:>14}\n",
                class, c.input, c.kept, c.excluded, threshold
            ));
        }
        out.push_str(&format!(
            "{:<20} {:>8} {:>8} {:>8} {:>13.2}%\n",
            "total",
            self.input_total,
            self.kept_total,
            self.classes.values().map(|c| c.excluded).sum::<usize>(),
            100.0 * self.retention
        ));
        out
    }
}

/// Keeps the top `⌈keep_fraction · n⌉` records of each texture class by score.
///
/// Within a class the sort is descending by score with ties broken by
/// ascending image id. Records that did not enter the stage are marked as
/// not surviving it; survival flags of later stages are reset.
pub fn quantile_cut(
    records: &mut [ImageRecord],
    stage: Stage,
    keep_fraction: f64,
) -> Result<StageReport, RefineError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(RefineError::BadFraction(keep_fraction));
    }
    let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();

    for (i, r) in records.iter_mut().enumerate() {
        let class = r.texture_class().to_string();
        classes.entry(class.clone()).or_default();
        for later in stage.later() {
            later.set_survival(r, None);
        }
        if !stage.admits(r) {
            stage.set_survival(r, Some(false));
            continue;
        }
        match stage.score(r) {
            Some(score) if score.is_finite() => classes.get_mut(&class).unwrap().push(i),
            Some(score) => {
                return Err(RefineError::NonFiniteScore {
                    image_id: r.image_id,
                    stage,
                    score,
                })
            }
            None => {
                if r.excluded.is_none() {
                    r.excluded = Some(format!("{stage}: no score"));
                }
                stage.set_survival(r, Some(false));
                *excluded.entry(class).or_default() += 1;
            }
        }
    }

    let mut report = StageReport {
        stage,
        keep_fraction,
        classes: BTreeMap::new(),
        input_total: 0,
        kept_total: 0,
        retention: 0.0,
        warnings: Vec::new(),
    };
    for (class, mut members) in classes {
        members.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            let (sa, sb) = (stage.score(ra).unwrap(), stage.score(rb).unwrap());
            sb.total_cmp(&sa).then(ra.image_id.cmp(&rb.image_id))
        });
        let n = members.len();
        let keep = keep_count(keep_fraction, n);
        for (pos, &i) in members.iter().enumerate() {
            stage.set_survival(&mut records[i], Some(pos < keep));
        }
        if n == 0 {
            report.warnings.push(format!(
                "class `{class}` has no live records at stage {stage}"
            ));
        }
        let threshold = keep
            .checked_sub(1)
            .map(|last| stage.score(&records[members[last]]).unwrap());
        report.input_total += n;
        report.kept_total += keep;
        report.classes.insert(
            class.clone(),
            ClassCut {
                input: n,
                kept: keep,
                excluded: excluded.get(&class).copied().unwrap_or(0),
                threshold,
            },
        );
    }
    report.retention = if report.input_total == 0 {
        0.0
    } else {
        report.kept_total as f64 / report.input_total as f64
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}
