use super::ScoreError;
use crate::gray::GrayPlane;

pub const DEFAULT_PATCH: usize = 50;
pub const DEFAULT_CLIP_SCALE: f64 = 100.0;

/// Population variance of the mean intensities of the full, non-overlapping
/// `patch`×`patch` tiles. Partial tiles at the right and bottom edges are
/// ignored.
pub fn patch_variance(plane: &GrayPlane, patch: usize) -> Result<f64, ScoreError> {
    let (w, h) = (plane.width(), plane.height());
    if patch == 0 || w < patch || h < patch {
        return Err(ScoreError::TooSmall {
            width: w,
            height: h,
            min: patch,
        });
    }
    let (tiles_x, tiles_y) = (w / patch, h / patch);
    let area = (patch * patch) as f64;
    let mut means = vec![0.0; tiles_x * tiles_y];
    for y in 0..tiles_y * patch {
        let row = plane.row(y);
        let ty = y / patch;
        for tx in 0..tiles_x {
            let s: f64 = row[tx * patch..(tx + 1) * patch].iter().sum();
            means[ty * tiles_x + tx] += s;
        }
    }
    for m in &mut means {
        *m /= area;
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    Ok(means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n)
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity between two embeddings, computed in `f64`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, ScoreError> {
    if a.len() != b.len() {
        return Err(ScoreError::DimMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(ScoreError::ZeroVector);
    }
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    Ok(dot / (na * nb))
}

/// `scale · max(cos(image, text), 0)`.
pub fn clip_score(image: &[f32], text: &[f32], scale: f64) -> Result<f64, ScoreError> {
    Ok(scale * cosine(image, text)?.max(0.0))
}
