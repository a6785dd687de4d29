//! On-disk formats: image manifest, flag ledger, feature cache, and the
//! consistency checker that ties them together.

mod features;
mod jsonl;
mod records;

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use features::{
    index_path, load_features, load_features_of, save_features, write_features, FeatureKind,
    FeatureMatrix, FORMAT_VERSION, HEADER_LEN, MAGIC,
};
pub use jsonl::{read_jsonl, read_jsonl_or_empty, to_jsonl_bytes, write_jsonl, JsonlAppender};
pub use records::{FlagLedgerEntry, ImageRecord, IncompletePrompt, StageScores, Survival};

use crate::prompt::PromptRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown feature kind code {0}")]
    UnknownKind(u32),
    #[error("header checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    HeaderChecksum { stored: u32, computed: u32 },
    #[error("truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("trailing bytes: expected {expected} payload bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} has {len} values, expected {dim}")]
    Ragged { row: usize, len: usize, dim: usize },
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("expected {expected} features, found {found}")]
    KindMismatch {
        expected: FeatureKind,
        found: FeatureKind,
    },
    #[error("no {kind} row for id {id}")]
    MissingId { kind: FeatureKind, id: u64 },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// File locations inside a dataset root.
#[derive(Clone, Debug)]
pub struct DatasetLayout {
    root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn prompts(&self) -> PathBuf {
        self.root.join("prompts.jsonl")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    pub fn ledger(&self) -> PathBuf {
        self.root.join("flag_ledger.jsonl")
    }

    pub fn incomplete(&self) -> PathBuf {
        self.root.join("incomplete.jsonl")
    }

    pub fn quarantine_dir(&self) -> PathBuf {
        self.root.join(QUARANTINE_DIR)
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn feature(&self, kind: FeatureKind) -> PathBuf {
        self.features_dir().join(kind.file_name())
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }
}

pub const QUARANTINE_DIR: &str = "quarantine";

/// Result of a `verify` pass. Empty `problems` means consistent.
#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub images: usize,
    pub feature_files: Vec<FeatureKind>,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Cross-checks manifest, image files, ledger and every feature file present.
pub fn verify_dataset(layout: &DatasetLayout) -> Result<VerifyReport, StoreError> {
    let mut report = VerifyReport::default();
    let records: Vec<ImageRecord> = read_jsonl(&layout.manifest())?;
    report.images = records.len();

    let mut image_ids = HashSet::new();
    let mut provenance = HashSet::new();
    for r in &records {
        if !image_ids.insert(r.image_id) {
            report
                .problems
                .push(format!("image id {} appears twice", r.image_id));
        }
        if !provenance.insert((r.prompt_id, r.seed, r.attempt)) {
            report.problems.push(format!(
                "(prompt {}, seed {}, attempt {}) appears twice",
                r.prompt_id, r.seed, r.attempt
            ));
        }
        match (&r.file_path, r.flagged) {
            (Some(_), true) => report
                .problems
                .push(format!("flagged image {} carries a file path", r.image_id)),
            (Some(p), false) => {
                if Path::new(p)
                    .components()
                    .next()
                    .is_some_and(|c| c.as_os_str() == QUARANTINE_DIR)
                {
                    report
                        .problems
                        .push(format!("image {} points into quarantine", r.image_id));
                } else if !layout.resolve(p).is_file() {
                    report
                        .problems
                        .push(format!("image {} file {p} is missing", r.image_id));
                }
            }
            (None, false) => report
                .problems
                .push(format!("image {} has no file path", r.image_id)),
            (None, true) => {}
        }
    }

    let live_images: BTreeSet<u64> = records
        .iter()
        .filter(|r| !r.flagged)
        .map(|r| r.image_id)
        .collect();
    let prompt_ids: BTreeSet<u64> = records.iter().map(|r| r.prompt_id).collect();

    for kind in FeatureKind::ALL {
        let path = layout.feature(kind);
        if !path.exists() {
            continue;
        }
        report.feature_files.push(kind);
        let m = match load_features_of(&path, kind) {
            Ok(m) => m,
            Err(e) => {
                report.problems.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let expected = if kind.keyed_by_prompt() {
            &prompt_ids
        } else {
            &live_images
        };
        let have: BTreeSet<u64> = m.ids().iter().copied().collect();
        for id in expected.difference(&have) {
            report.problems.push(format!("{kind}: no row for id {id}"));
        }
        for id in have.difference(expected) {
            report
                .problems
                .push(format!("{kind}: orphan row for id {id}"));
        }
    }

    let prompts_path = layout.prompts();
    let ledger: Vec<FlagLedgerEntry> = read_jsonl_or_empty(&layout.ledger())?;
    if prompts_path.exists() {
        let known: HashSet<u64> = read_jsonl::<PromptRecord>(&prompts_path)?
            .iter()
            .map(|p| p.prompt_id)
            .collect();
        for e in &ledger {
            if !known.contains(&e.prompt_id) {
                report
                    .problems
                    .push(format!("ledger entry for unknown prompt {}", e.prompt_id));
            }
        }
        for id in &prompt_ids {
            if !known.contains(id) {
                report
                    .problems
                    .push(format!("manifest references unknown prompt {id}"));
            }
        }
    }
    Ok(report)
}
