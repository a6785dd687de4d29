use serde::{Deserialize, Serialize};

use crate::prompt::{PromptRecord, Slots};

/// Scores filled in by the refinement stages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_c: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

/// Per-stage survival. `None` means the stage has not been applied yet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Survival {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patchvar: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<bool>,
}

/// One generated image. Serializes to a manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub prompt_id: u64,
    pub seed: u64,
    pub attempt: u32,
    pub flagged: bool,
    /// Relative to the dataset root. Never set for flagged images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_path: Option<String>,
    pub width: u32,
    pub height: u32,
    pub slots: Slots,
    pub prompt: String,
    #[serde(default)]
    pub stage_scores: StageScores,
    #[serde(default)]
    pub survives: Survival,
    /// Why a stage could not score this record, if one failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

impl ImageRecord {
    pub fn texture_class(&self) -> &str {
        &self.slots.texture
    }

    /// Survivor of every stage applied so far.
    pub fn is_live(&self) -> bool {
        let s = self.survives;
        !self.flagged
            && [s.freq, s.patchvar, s.clip]
                .iter()
                .all(|v| *v != Some(false))
    }

    pub fn from_prompt(prompt: &PromptRecord, image_id: u64, seed: u64, attempt: u32) -> Self {
        Self {
            image_id,
            prompt_id: prompt.prompt_id,
            seed,
            attempt,
            flagged: false,
            file_path: None,
            width: 0,
            height: 0,
            slots: prompt.slots.clone(),
            prompt: prompt.text.clone(),
            stage_scores: StageScores::default(),
            survives: Survival::default(),
            excluded: None,
        }
    }
}

/// One flagged generation attempt. The ledger is append-only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagLedgerEntry {
    pub prompt_id: u64,
    pub seed: u64,
    pub attempt: u32,
    /// Unix milliseconds.
    pub timestamp: u64,
    /// Quarantined pixels, relative to the dataset root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine_path: Option<String>,
}

/// A prompt that could not reach its kept-image quota.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompletePrompt {
    pub prompt_id: u64,
    pub kept: usize,
    pub wanted: usize,
    pub attempts: u32,
    pub reason: String,
}
