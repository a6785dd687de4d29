//! Feature extraction through an embedding backend (`POST /v1/embed`) and
//! construction of a dataset's feature files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::BackendError;
use crate::gray::encode_png;
use crate::hash::{fnv1a, UnitStream};
use crate::store::{
    save_features, DatasetLayout, FeatureKind, FeatureMatrix, ImageRecord, StoreError,
};

/// Body of `POST /v1/embed`.
///
/// Text kinds (`clip_text`) read `texts`; every other kind reads
/// `images_png_base64`. With `output_path` set the backend writes the rows to
/// that PTDF file instead of returning them inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images_png_base64: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

impl EmbedRequest {
    pub fn images(kind: FeatureKind, pngs: &[Vec<u8>]) -> Self {
        Self {
            kind,
            images_png_base64: pngs.iter().map(|b| B64.encode(b)).collect(),
            texts: Vec::new(),
            output_path: None,
        }
    }

    pub fn texts(texts: Vec<String>) -> Self {
        Self {
            kind: FeatureKind::ClipText,
            images_png_base64: Vec::new(),
            texts,
            output_path: None,
        }
    }

    pub fn len(&self) -> usize {
        if self.kind == FeatureKind::ClipText {
            self.texts.len()
        } else {
            self.images_png_base64.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Response of `POST /v1/embed`: inline `rows`, or `path` to a PTDF file
/// holding `n_rows` rows when the request named an output path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub kind: FeatureKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rows: Option<usize>,
}

pub trait Embedder: Send + Sync {
    /// Returns one row per input, in input order.
    fn embed(&self, request: &EmbedRequest) -> Result<Vec<Vec<f32>>, BackendError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed(&self, request: &EmbedRequest) -> Result<Vec<Vec<f32>>, BackendError> {
        (**self).embed(request)
    }
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn embed(&self, request: &EmbedRequest) -> Result<Vec<Vec<f32>>, BackendError> {
        (**self).embed(request)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockDims {
    pub clip: usize,
    pub pool: usize,
    pub logits: usize,
    pub probs: usize,
}

impl Default for MockDims {
    fn default() -> Self {
        Self {
            clip: 512,
            pool: 2048,
            logits: 1008,
            probs: 1000,
        }
    }
}

impl MockDims {
    pub fn of(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::ClipImage | FeatureKind::ClipText => self.clip,
            FeatureKind::InceptionPool => self.pool,
            FeatureKind::InceptionLogits => self.logits,
            FeatureKind::ClassifierProbs => self.probs,
        }
    }
}

/// Deterministic pseudo-embeddings derived from content hashes.
///
/// CLIP rows are unit-norm, classifier rows lie on the simplex, pool features
/// are nonnegative and logits are spread wide enough to give peaked softmaxes.
#[derive(Clone, Debug, Default)]
pub struct MockEmbedder {
    pub dims: MockDims,
}

impl MockEmbedder {
    pub fn new(dims: MockDims) -> Self {
        Self { dims }
    }

    pub fn row(&self, kind: FeatureKind, content: &[u8]) -> Vec<f32> {
        let dim = self.dims.of(kind);
        let mut s = UnitStream::new(fnv1a(content) ^ u64::from(kind.code()).rotate_left(32));
        let mut raw: Vec<f64> = (0..dim).map(|_| s.next_unit()).collect();
        match kind {
            FeatureKind::ClipImage | FeatureKind::ClipText => {
                raw.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
                let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                raw.iter_mut().for_each(|v| *v /= n);
            }
            FeatureKind::InceptionPool => {}
            FeatureKind::InceptionLogits => raw.iter_mut().for_each(|v| *v *= 12.0),
            FeatureKind::ClassifierProbs => {
                let e: Vec<f64> = raw.iter().map(|v| (8.0 * v).exp()).collect();
                let z: f64 = e.iter().sum();
                raw = e.into_iter().map(|v| v / z).collect();
            }
        }
        raw.into_iter().map(|v| v as f32).collect()
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, request: &EmbedRequest) -> Result<Vec<Vec<f32>>, BackendError> {
        if request.kind == FeatureKind::ClipText {
            return Ok(request
                .texts
                .iter()
                .map(|t| self.row(request.kind, t.as_bytes()))
                .collect());
        }
        request
            .images_png_base64
            .iter()
            .map(|b| {
                let bytes = B64
                    .decode(b)
                    .map_err(|e| BackendError::Protocol(format!("bad base64: {e}")))?;
                Ok(self.row(request.kind, &bytes))
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("image: {0}")]
    Image(String),
    #[error("image {image_id} has no file")]
    NoFile { image_id: u64 },
    #[error("{kind}: expected {expected} rows, backend returned {got}")]
    RowCount {
        kind: FeatureKind,
        expected: usize,
        got: usize,
    },
    #[error("{kind}: inconsistent row dimension {got} (expected {expected})")]
    Dim {
        kind: FeatureKind,
        expected: usize,
        got: usize,
    },
}

/// Embeds every live image (or, for `clip_text`, every distinct prompt of a
/// live image) and returns the matrix keyed by image or prompt id.
pub fn embed_dataset<E: Embedder + ?Sized>(
    records: &[ImageRecord],
    layout: &DatasetLayout,
    kind: FeatureKind,
    embedder: &E,
    batch: usize,
) -> Result<FeatureMatrix, EmbedError> {
    let live = records.iter().filter(|r| !r.flagged);
    let ids: Vec<u64>;
    let batches: Vec<Result<Vec<Vec<f32>>, EmbedError>>;
    if kind.keyed_by_prompt() {
        let prompts: BTreeMap<u64, &str> = live.map(|r| (r.prompt_id, r.prompt.as_str())).collect();
        ids = prompts.keys().copied().collect();
        let texts: Vec<String> = prompts.values().map(|t| t.to_string()).collect();
        batches = texts
            .par_chunks(batch.max(1))
            .map(|chunk| run_batch(embedder, &EmbedRequest::texts(chunk.to_vec()), kind))
            .collect();
    } else {
        let live: Vec<&ImageRecord> = live.collect();
        ids = live.iter().map(|r| r.image_id).collect();
        batches = live
            .par_chunks(batch.max(1))
            .map(|chunk| {
                let pngs = chunk
                    .iter()
                    .map(|r| {
                        let rel = r.file_path.as_deref().ok_or(EmbedError::NoFile {
                            image_id: r.image_id,
                        })?;
                        let path = layout.resolve(rel);
                        std::fs::read(&path).map_err(|e| StoreError::io(&path, e).into())
                    })
                    .collect::<Result<Vec<_>, EmbedError>>()?;
                run_batch(embedder, &EmbedRequest::images(kind, &pngs), kind)
            })
            .collect();
    }

    let mut rows = Vec::with_capacity(ids.len());
    for b in batches {
        rows.extend(b?);
    }
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(EmbedError::Dim {
            kind,
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(FeatureMatrix::from_rows(kind, dim, &rows, &ids)?)
}

fn run_batch<E: Embedder + ?Sized>(
    embedder: &E,
    request: &EmbedRequest,
    kind: FeatureKind,
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let rows = embedder.embed(request)?;
    if rows.len() != request.len() {
        return Err(EmbedError::RowCount {
            kind,
            expected: request.len(),
            got: rows.len(),
        });
    }
    Ok(rows)
}

/// Embeds the dataset for each kind and writes `features/<kind>.ptdf`.
pub fn build_features<E: Embedder + ?Sized>(
    records: &[ImageRecord],
    layout: &DatasetLayout,
    kinds: &[FeatureKind],
    embedder: &E,
    batch: usize,
) -> Result<BTreeMap<FeatureKind, usize>, EmbedError> {
    let mut written = BTreeMap::new();
    for &kind in kinds {
        let m = embed_dataset(records, layout, kind, embedder, batch)?;
        let path = layout.feature(kind);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        }
        save_features(&path, &m)?;
        log::info!("wrote {} rows of {kind} to {}", m.n_rows(), path.display());
        written.insert(kind, m.n_rows());
    }
    Ok(written)
}

/// Image files under `dir` (recursively) with a png/jpg/jpeg extension,
/// sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| StoreError::io(&d, e))? {
            let path = entry.map_err(|e| StoreError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Embeds arbitrary image files, re-encoding non-PNG inputs as PNG.
pub fn embed_files<E: Embedder + ?Sized>(
    paths: &[PathBuf],
    kind: FeatureKind,
    embedder: &E,
    batch: usize,
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let batches: Vec<Result<Vec<Vec<f32>>, EmbedError>> = paths
        .par_chunks(batch.max(1))
        .map(|chunk| {
            let pngs = chunk
                .iter()
                .map(|p| {
                    let is_png = p
                        .extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
                    if is_png {
                        std::fs::read(p).map_err(|e| EmbedError::Store(StoreError::io(p, e)))
                    } else {
                        let img = image::open(p)
                            .map_err(|e| EmbedError::Image(format!("{}: {e}", p.display())))?;
                        encode_png(&img.to_rgb8()).map_err(|e| EmbedError::Image(e.to_string()))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            run_batch(embedder, &EmbedRequest::images(kind, &pngs), kind)
        })
        .collect();
    let mut rows = Vec::with_capacity(paths.len());
    for b in batches {
        rows.extend(b?);
    }
    Ok(rows)
}

/// Reads a PTDF file a backend wrote in place of inline rows.
pub fn rows_from_file(path: &Path, kind: FeatureKind) -> Result<Vec<Vec<f32>>, StoreError> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    let n = bytes
        .get(12..20)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
        .unwrap_or(0);
    let m = FeatureMatrix::from_bytes(&bytes, (0..n as u64).collect())?;
    if m.kind() != kind {
        return Err(StoreError::KindMismatch {
            expected: kind,
            found: m.kind(),
        });
    }
    Ok(m.rows().map(<[f32]>::to_vec).collect())
}
