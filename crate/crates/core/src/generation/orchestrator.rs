use std::collections::HashMap;
use std::io::Cursor;
use std::path::PathBuf;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::Engine;
use rayon::prelude::*;
use thiserror::Error;

use super::backend::{BackendError, GenerateRequest, GenerationBackend};
use crate::prompt::PromptRecord;
use crate::store::{
    write_jsonl, DatasetLayout, FlagLedgerEntry, ImageRecord, IncompletePrompt, JsonlAppender,
    StoreError, QUARANTINE_DIR,
};

/// Odd multiplier of the per-prompt seed counter.
pub const SEED_MULTIPLIER: u64 = 0x9e37_79b9_7f4a_7c15;
/// Seeds stay below 2^53 so every JSON consumer reads them exactly.
pub const SEED_MASK: u64 = (1 << 53) - 1;

/// Seed of the `draw`-th generation (1-based) requested for a prompt.
pub fn seed_for(prompt_id: u64, draw: u64) -> u64 {
    prompt_id.wrapping_mul(SEED_MULTIPLIER).wrapping_add(draw) & SEED_MASK
}

/// Stable id of the `slot`-th kept image of a prompt.
pub fn image_id_for(prompt_id: u64, n_keep: usize, slot: usize) -> u64 {
    prompt_id * n_keep as u64 + slot as u64
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenerationConfig {
    pub n_keep: usize,
    /// Attempts allowed per kept image before the prompt is marked incomplete.
    pub max_attempts: u32,
    pub width: u32,
    pub height: u32,
    pub retry: RetryPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_keep: 5,
            max_attempts: 25,
            width: 512,
            height: 512,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("prompt {prompt_id}: backend unreachable after {retries} retries: {message}")]
    Transport {
        prompt_id: u64,
        retries: u32,
        message: String,
    },
    #[error("prompt {prompt_id}: {message}")]
    Protocol { prompt_id: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug)]
pub struct KeptImage {
    pub record: ImageRecord,
    pub png: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct FlaggedImage {
    pub seed: u64,
    pub attempt: u32,
    pub png: Vec<u8>,
}

/// Everything one prompt produced, in memory.
#[derive(Clone, Debug)]
pub struct PromptOutcome {
    pub prompt_id: u64,
    /// Ordered by slot; shorter than `n_keep` only when `incomplete` is set.
    pub kept: Vec<KeptImage>,
    /// In request order.
    pub flagged: Vec<FlaggedImage>,
    pub total_attempts: u32,
    pub incomplete: Option<IncompletePrompt>,
}

fn call_with_retry<B: GenerationBackend + ?Sized>(
    backend: &B,
    request: &GenerateRequest,
    policy: &RetryPolicy,
    prompt_id: u64,
) -> Result<super::backend::GenerateResponse, GenerationError> {
    let mut delay = policy.initial_backoff;
    let mut tries = 0;
    loop {
        match backend.generate(request) {
            Ok(resp) => return Ok(resp),
            Err(BackendError::Transport(message)) => {
                if tries >= policy.max_retries {
                    return Err(GenerationError::Transport {
                        prompt_id,
                        retries: tries,
                        message,
                    });
                }
                log::warn!("prompt {prompt_id}: transport error ({message}), retrying");
                std::thread::sleep(delay);
                delay *= 2;
                tries += 1;
            }
            Err(BackendError::Protocol(message)) => {
                return Err(GenerationError::Protocol { prompt_id, message })
            }
        }
    }
}

fn png_dimensions(png: &[u8]) -> Option<(u32, u32)> {
    image::ImageReader::with_format(Cursor::new(png), image::ImageFormat::Png)
        .into_dimensions()
        .ok()
}

/// Generates until `n_keep` unflagged images exist or some slot runs out of
/// attempts. Each round requests one fresh seed per still-open slot; flagged
/// slots are retried in the next round.
pub fn generate_for_prompt<B: GenerationBackend + ?Sized>(
    prompt: &PromptRecord,
    config: &GenerationConfig,
    backend: &B,
) -> Result<PromptOutcome, GenerationError> {
    if config.n_keep == 0 || config.max_attempts == 0 {
        return Err(GenerationError::Config(
            "n_keep and max_attempts must be at least 1".into(),
        ));
    }
    let pid = prompt.prompt_id;
    let engine = base64::engine::general_purpose::STANDARD;
    let protocol = |message: String| GenerationError::Protocol {
        prompt_id: pid,
        message,
    };

    let mut kept: Vec<Option<KeptImage>> = vec![None; config.n_keep];
    let mut attempts = vec![0u32; config.n_keep];
    let mut flagged = Vec::new();
    let mut exhausted = Vec::new();
    let mut pending: Vec<usize> = (0..config.n_keep).collect();
    let mut draw = 0u64;

    while !pending.is_empty() {
        let seeds: Vec<u64> = pending
            .iter()
            .map(|&slot| {
                draw += 1;
                attempts[slot] += 1;
                seed_for(pid, draw)
            })
            .collect();
        let request = GenerateRequest {
            prompt_text: prompt.text.clone(),
            seeds: seeds.clone(),
            width: config.width,
            height: config.height,
        };
        let response = call_with_retry(backend, &request, &config.retry, pid)?;
        if response.results.len() != seeds.len() {
            return Err(protocol(format!(
                "asked for {} images, got {}",
                seeds.len(),
                response.results.len()
            )));
        }
        let mut by_seed: HashMap<u64, _> = HashMap::with_capacity(seeds.len());
        for result in response.results {
            let seed = result.seed;
            if by_seed.insert(seed, result).is_some() {
                return Err(protocol(format!("seed {seed} returned twice")));
            }
        }

        let mut next = Vec::new();
        for (&slot, &seed) in pending.iter().zip(&seeds) {
            let result = by_seed
                .remove(&seed)
                .ok_or_else(|| protocol(format!("no result for seed {seed}")))?;
            let png = engine
                .decode(result.png_base64.as_bytes())
                .map_err(|e| protocol(format!("seed {seed}: bad base64: {e}")))?;
            let (width, height) = png_dimensions(&png)
                .ok_or_else(|| protocol(format!("seed {seed}: payload is not a PNG")))?;
            let attempt = attempts[slot];
            if result.nsfw_flagged {
                flagged.push(FlaggedImage { seed, attempt, png });
                if attempt < config.max_attempts {
                    next.push(slot);
                } else {
                    exhausted.push(slot);
                }
            } else {
                let image_id = image_id_for(pid, config.n_keep, slot);
                let mut record = ImageRecord::from_prompt(prompt, image_id, seed, attempt);
                record.width = width;
                record.height = height;
                record.file_path = Some(format!("{}/{image_id}.png", prompt.texture_class()));
                kept[slot] = Some(KeptImage { record, png });
            }
        }
        pending = next;
    }

    let total_attempts = attempts.iter().sum();
    let kept: Vec<KeptImage> = kept.into_iter().flatten().collect();
    let incomplete = (!exhausted.is_empty()).then(|| IncompletePrompt {
        prompt_id: pid,
        kept: kept.len(),
        wanted: config.n_keep,
        attempts: total_attempts,
        reason: format!(
            "{} slot(s) flagged on all {} attempts",
            exhausted.len(),
            config.max_attempts
        ),
    });
    Ok(PromptOutcome {
        prompt_id: pid,
        kept,
        flagged,
        total_attempts,
        incomplete,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GenerationSummary {
    pub prompts: usize,
    pub kept: usize,
    pub flagged: usize,
    pub attempts: u64,
    pub incomplete: usize,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| StoreError::io(&path, e))
}

struct Persisted {
    records: Vec<ImageRecord>,
    ledger: Vec<FlagLedgerEntry>,
    incomplete: Option<IncompletePrompt>,
    attempts: u32,
}

fn persist(layout: &DatasetLayout, outcome: PromptOutcome) -> Result<Persisted, StoreError> {
    let mut ledger = Vec::with_capacity(outcome.flagged.len());
    for f in outcome.flagged {
        let rel = format!("{QUARANTINE_DIR}/{}_{}.png", outcome.prompt_id, f.seed);
        write_file(layout.resolve(&rel), &f.png)?;
        ledger.push(FlagLedgerEntry {
            prompt_id: outcome.prompt_id,
            seed: f.seed,
            attempt: f.attempt,
            timestamp: now_millis(),
            quarantine_path: Some(rel),
        });
    }
    let mut records = Vec::with_capacity(outcome.kept.len());
    for k in outcome.kept {
        let rel = k
            .record
            .file_path
            .as_deref()
            .expect("kept images have paths");
        write_file(layout.resolve(rel), &k.png)?;
        records.push(k.record);
    }
    Ok(Persisted {
        records,
        ledger,
        incomplete: outcome.incomplete,
        attempts: outcome.total_attempts,
    })
}

const CHUNK: usize = 256;

/// Generates every prompt into `layout`, `workers` prompts at a time.
///
/// Image files are written by the worker that produced them; manifest, flag
/// ledger and incomplete list are appended by the calling thread in prompt
/// order, so the output does not depend on the worker count.
pub fn run_generation<B: GenerationBackend + ?Sized>(
    prompts: &[PromptRecord],
    backend: &B,
    config: &GenerationConfig,
    layout: &DatasetLayout,
    workers: usize,
) -> Result<GenerationSummary, GenerationError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| GenerationError::Config(e.to_string()))?;

    write_jsonl(&layout.prompts(), prompts)?;
    for path in [layout.manifest(), layout.ledger(), layout.incomplete()] {
        if path.exists() {
            std::fs::remove_file(&path).map_err(|e| StoreError::io(&path, e))?;
        }
    }
    let mut manifest = JsonlAppender::open(&layout.manifest())?;
    let mut ledger = JsonlAppender::open(&layout.ledger())?;
    let mut incomplete: Vec<IncompletePrompt> = Vec::new();
    let mut summary = GenerationSummary::default();

    for chunk in prompts.chunks(CHUNK) {
        let results: Vec<Result<Persisted, GenerationError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|p| {
                    let outcome = generate_for_prompt(p, config, backend)?;
                    Ok(persist(layout, outcome)?)
                })
                .collect()
        });
        for result in results {
            let p = result?;
            summary.prompts += 1;
            summary.kept += p.records.len();
            summary.flagged += p.ledger.len();
            summary.attempts += u64::from(p.attempts);
            for r in &p.records {
                manifest.append(r)?;
            }
            for e in &p.ledger {
                ledger.append(e)?;
            }
            if let Some(inc) = p.incomplete {
                log::warn!("prompt {} incomplete: {}", inc.prompt_id, inc.reason);
                incomplete.push(inc);
            }
        }
    }
    summary.incomplete = incomplete.len();
    write_jsonl(&layout.incomplete(), &incomplete)?;
    Ok(summary)
}
