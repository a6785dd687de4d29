//! Binary feature cache.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `PTDF`                            |
//! | 4      | 4    | format version (`1`)                    |
//! | 8      | 4    | kind code                               |
//! | 12     | 8    | row count                               |
//! | 20     | 8    | row dimension                           |
//! | 28     | 4    | CRC-32 of bytes 0..28                   |
//! | 32     | 4·n·d | row-major `f32` payload                |
//!
//! Row ids live in a companion JSON-lines file (`<stem>.index.jsonl`), one
//! `{"id": .., "row": ..}` object per row in row order.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::jsonl::{read_jsonl, write_jsonl};
use super::StoreError;

pub const MAGIC: [u8; 4] = *b"PTDF";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    ClipImage,
    ClipText,
    InceptionPool,
    InceptionLogits,
    ClassifierProbs,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::ClipImage,
        FeatureKind::ClipText,
        FeatureKind::InceptionPool,
        FeatureKind::InceptionLogits,
        FeatureKind::ClassifierProbs,
    ];

    pub fn code(self) -> u32 {
        match self {
            FeatureKind::ClipImage => 1,
            FeatureKind::ClipText => 2,
            FeatureKind::InceptionPool => 3,
            FeatureKind::InceptionLogits => 4,
            FeatureKind::ClassifierProbs => 5,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::ClipImage => "clip_image",
            FeatureKind::ClipText => "clip_text",
            FeatureKind::InceptionPool => "inception_pool",
            FeatureKind::InceptionLogits => "inception_logits",
            FeatureKind::ClassifierProbs => "classifier_probs",
        }
    }

    /// Text kinds are keyed by prompt id, image kinds by image id.
    pub fn keyed_by_prompt(self) -> bool {
        matches!(self, FeatureKind::ClipText)
    }

    /// Conventional file name under a features directory.
    pub fn file_name(self) -> String {
        format!("{}.ptdf", self.name())
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown feature kind `{s}`"))
    }
}

/// N×D matrix of `f32` features with an id → row index.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    dim: usize,
    values: Vec<f32>,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    id: u64,
    row: usize,
}

impl FeatureMatrix {
    /// Validates rectangularity, finiteness and id uniqueness.
    pub fn from_rows<R: AsRef<[f32]>>(
        kind: FeatureKind,
        dim: usize,
        rows: &[R],
        ids: &[u64],
    ) -> Result<Self, StoreError> {
        if rows.len() != ids.len() {
            return Err(StoreError::IndexMismatch(format!(
                "{} rows but {} ids",
                rows.len(),
                ids.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(StoreError::Ragged {
                    row: r,
                    len: row.len(),
                    dim,
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(kind, dim, values, ids.to_vec())
    }

    fn from_flat(
        kind: FeatureKind,
        dim: usize,
        values: Vec<f32>,
        ids: Vec<u64>,
    ) -> Result<Self, StoreError> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite {
                row: pos / dim.max(1),
                col: pos % dim.max(1),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(StoreError::DuplicateId(id));
            }
        }
        Ok(Self {
            kind,
            dim,
            values,
            ids,
            index,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_of(&self, id: u64) -> Option<&[f32]> {
        self.index.get(&id).map(|&i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    /// Sub-matrix over `ids`, in the given order.
    pub fn select(&self, ids: &[u64]) -> Result<FeatureMatrix, StoreError> {
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            let row = self.row_of(id).ok_or(StoreError::MissingId {
                kind: self.kind,
                id,
            })?;
            values.extend_from_slice(row);
        }
        Self::from_flat(self.kind, self.dim, values, ids.to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        out.extend_from_slice(&(self.n_rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a payload produced by [`FeatureMatrix::to_bytes`] and attaches `ids`.
    pub fn from_bytes(bytes: &[u8], ids: Vec<u64>) -> Result<Self, StoreError> {
        let header = parse_header(bytes)?;
        if ids.len() != header.n_rows {
            return Err(StoreError::IndexMismatch(format!(
                "header has {} rows but index lists {}",
                header.n_rows,
                ids.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..];
        let expected = header
            .n_rows
            .checked_mul(header.dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(StoreError::Truncated {
                expected: u64::MAX,
                actual: payload.len() as u64,
            })?;
        if payload.len() < expected {
            return Err(StoreError::Truncated {
                expected: expected as u64,
                actual: payload.len() as u64,
            });
        }
        if payload.len() > expected {
            return Err(StoreError::TrailingBytes {
                expected: expected as u64,
                actual: payload.len() as u64,
            });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_flat(header.kind, header.dim, values, ids)
    }
}

struct Header {
    kind: FeatureKind,
    n_rows: usize,
    dim: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, StoreError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(StoreError::BadMagic);
        }
        return Err(StoreError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let stored = u32_at(28);
    let computed = crc32fast::hash(&bytes[..28]);
    if stored != computed {
        return Err(StoreError::HeaderChecksum { stored, computed });
    }
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let code = u32_at(8);
    let kind = FeatureKind::from_code(code).ok_or(StoreError::UnknownKind(code))?;
    let too_big = |v: u64| StoreError::Truncated {
        expected: v,
        actual: bytes.len() as u64,
    };
    let n_rows = usize::try_from(u64_at(12)).map_err(|_| too_big(u64_at(12)))?;
    let dim = usize::try_from(u64_at(20)).map_err(|_| too_big(u64_at(20)))?;
    Ok(Header { kind, n_rows, dim })
}

/// Companion index path: `features/clip_image.ptdf` → `features/clip_image.index.jsonl`.
pub fn index_path(path: &Path) -> PathBuf {
    path.with_extension("index.jsonl")
}

/// Writes the binary matrix and its id index.
pub fn write_features<R: AsRef<[f32]>>(
    path: &Path,
    kind: FeatureKind,
    dim: usize,
    rows: &[R],
    ids: &[u64],
) -> Result<FeatureMatrix, StoreError> {
    let matrix = FeatureMatrix::from_rows(kind, dim, rows, ids)?;
    save_features(path, &matrix)?;
    Ok(matrix)
}

pub fn save_features(path: &Path, matrix: &FeatureMatrix) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
    }
    std::fs::write(path, matrix.to_bytes()).map_err(|e| StoreError::io(path, e))?;
    let lines: Vec<IndexLine> = matrix
        .ids
        .iter()
        .enumerate()
        .map(|(row, &id)| IndexLine { id, row })
        .collect();
    write_jsonl(&index_path(path), &lines)
}

/// Loads and fully validates a feature file and its index.
pub fn load_features(path: &Path) -> Result<FeatureMatrix, StoreError> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    let lines: Vec<IndexLine> = read_jsonl(&index_path(path))?;
    let mut ids = vec![None; lines.len()];
    for line in &lines {
        match ids.get_mut(line.row) {
            Some(slot @ None) => *slot = Some(line.id),
            Some(Some(_)) => {
                return Err(StoreError::IndexMismatch(format!(
                    "row {} listed twice",
                    line.row
                )))
            }
            None => {
                return Err(StoreError::IndexMismatch(format!(
                    "row {} out of range ({} index lines)",
                    line.row,
                    lines.len()
                )))
            }
        }
    }
    let ids = ids.into_iter().map(|id| id.expect("bijective")).collect();
    FeatureMatrix::from_bytes(&bytes, ids)
}

/// [`load_features`] plus a kind check.
pub fn load_features_of(path: &Path, kind: FeatureKind) -> Result<FeatureMatrix, StoreError> {
    let m = load_features(path)?;
    if m.kind() != kind {
        return Err(StoreError::KindMismatch {
            expected: kind,
            found: m.kind(),
        });
    }
    Ok(m)
}
