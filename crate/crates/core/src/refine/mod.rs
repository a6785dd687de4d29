//! Three-stage refinement cascade: frequency cutoff, patch variance and CLIP
//! score, each cut per texture class.

mod cut;
mod pipeline;
mod scores;
mod spectrum;

use thiserror::Error;

pub use cut::{keep_count, quantile_cut, ClassCut, Stage, StageReport};
pub use pipeline::{
    balance_classes, refine_all, run_refinement, score_clip, score_images, BalanceReport,
    KeepFractions, RefineOptions,
};
pub use scores::{clip_score, cosine, patch_variance, DEFAULT_CLIP_SCALE, DEFAULT_PATCH};
pub use spectrum::{
    bin_radially, fftshift, frequency_cutoff, k_max, power_2d, radial_bin, radial_power_spectrum,
    signed_freq, PowerSpectrum,
};

use crate::gray::ImageError;
use crate::store::StoreError;

/// A per-image score that could not be computed.
#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("zero spectral energy")]
    ZeroEnergy,
    #[error("zero-length embedding")]
    ZeroVector,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("record has no image file")]
    NoFile,
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("keep fraction {0} must lie in (0, 1]")]
    BadFraction(f64),
    #[error("image {image_id}: non-finite {stage} score {score}")]
    NonFiniteScore {
        image_id: u64,
        stage: Stage,
        score: f64,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("worker pool: {0}")]
    Pool(String),
}
