use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use ptd_core::store::{read_jsonl, write_jsonl, ImageRecord};
use serde::Serialize;

/// Which records of a manifest a command looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Slice {
    /// Every unflagged image, before refinement.
    All,
    /// Survivors of every stage applied so far.
    Live,
    Freq,
    Patchvar,
    Clip,
}

impl Slice {
    pub fn admits(self, r: &ImageRecord) -> bool {
        let s = r.survives;
        !r.flagged
            && match self {
                Slice::All => true,
                Slice::Live => r.is_live(),
                Slice::Freq => s.freq == Some(true),
                Slice::Patchvar => s.freq == Some(true) && s.patchvar == Some(true),
                Slice::Clip => {
                    s.freq == Some(true) && s.patchvar == Some(true) && s.clip == Some(true)
                }
            }
    }

    pub fn select(self, records: Vec<ImageRecord>) -> Vec<ImageRecord> {
        records.into_iter().filter(|r| self.admits(r)).collect()
    }
}

pub fn root_of(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    Ok(read_jsonl(path)?)
}

/// Rewrites the manifest through a temporary file so readers never see a
/// partial file.
pub fn save_manifest(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    write_jsonl(&tmp, records)?;
    std::fs::rename(&tmp, path).with_context(|| path.display().to_string())
}

/// Pretty JSON to `path`, or to stdout.
pub fn write_output<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
