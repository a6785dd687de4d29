//! Safety-flag rates broken down by descriptor word.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::prompt::{Category, PromptRecord};
use crate::store::{FlagLedgerEntry, ImageRecord};

#[derive(Debug, Error)]
pub enum FlagReportError {
    #[error("ledger references prompt {0}, which is not in the prompt manifest")]
    UnknownLedgerPrompt(u64),
    #[error("image manifest references prompt {0}, which is not in the prompt manifest")]
    UnknownImagePrompt(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordFlagRate {
    pub category: Category,
    pub word: String,
    pub attempts: u64,
    pub flagged_attempts: u64,
    pub prompts: u64,
    pub flagged_prompts: u64,
    /// Flagged attempts over all attempts whose prompt contains the word.
    pub image_flag_ratio: f64,
    /// Prompts with at least one flag over prompts containing the word.
    pub prompt_flag_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlagReport {
    pub total_attempts: u64,
    pub flagged_attempts: u64,
    pub overall_image_flag_ratio: f64,
    /// Descending by prompt ratio, then image ratio, then category and word.
    pub words: Vec<WordFlagRate>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-word flag rates. A prompt's attempts are its kept (unflagged) manifest
/// images plus its ledger entries; prompts without any attempt are ignored.
pub fn flag_rates_by_word(
    prompts: &[PromptRecord],
    images: &[ImageRecord],
    ledger: &[FlagLedgerEntry],
) -> Result<FlagReport, FlagReportError> {
    let by_id: HashMap<u64, &PromptRecord> = prompts.iter().map(|p| (p.prompt_id, p)).collect();
    // prompt id -> (attempts, flagged)
    let mut per_prompt: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for img in images.iter().filter(|i| !i.flagged) {
        if !by_id.contains_key(&img.prompt_id) {
            return Err(FlagReportError::UnknownImagePrompt(img.prompt_id));
        }
        per_prompt.entry(img.prompt_id).or_default().0 += 1;
    }
    for e in ledger {
        if !by_id.contains_key(&e.prompt_id) {
            return Err(FlagReportError::UnknownLedgerPrompt(e.prompt_id));
        }
        let slot = per_prompt.entry(e.prompt_id).or_default();
        slot.0 += 1;
        slot.1 += 1;
    }

    let mut words: BTreeMap<(Category, &str), WordFlagRate> = BTreeMap::new();
    let (mut total, mut flagged) = (0u64, 0u64);
    for (&pid, &(attempts, flags)) in &per_prompt {
        total += attempts;
        flagged += flags;
        for (category, word) in by_id[&pid].slots.present_words() {
            let entry = words
                .entry((category, word))
                .or_insert_with(|| WordFlagRate {
                    category,
                    word: word.to_string(),
                    attempts: 0,
                    flagged_attempts: 0,
                    prompts: 0,
                    flagged_prompts: 0,
                    image_flag_ratio: 0.0,
                    prompt_flag_ratio: 0.0,
                });
            entry.attempts += attempts;
            entry.flagged_attempts += flags;
            entry.prompts += 1;
            entry.flagged_prompts += u64::from(flags > 0);
        }
    }

    let mut words: Vec<WordFlagRate> = words
        .into_values()
        .map(|mut w| {
            w.image_flag_ratio = ratio(w.flagged_attempts, w.attempts);
            w.prompt_flag_ratio = ratio(w.flagged_prompts, w.prompts);
            w
        })
        .collect();
    words.sort_by(|a, b| {
        b.prompt_flag_ratio
            .total_cmp(&a.prompt_flag_ratio)
            .then(b.image_flag_ratio.total_cmp(&a.image_flag_ratio))
            .then(a.category.cmp(&b.category))
            .then(a.word.cmp(&b.word))
    });
    Ok(FlagReport {
        total_attempts: total,
        flagged_attempts: flagged,
        overall_image_flag_ratio: ratio(flagged, total),
        words,
    })
}
