//! Dataset-level metrics: Inception Score, FID, mean power spectra, CLIP
//! statistics by descriptor pair and the CLIP-vs-human quantile curve.

mod clipstats;
mod curve;
mod fid;
mod inception;
mod power;
mod stats;

use thiserror::Error;

pub use clipstats::{clip_stats_by_pair, median, pair_families, slot_label, top_bottom, PairStat};
pub use curve::{default_grid, human_vs_clip_curve, quantile_sorted, Curve, CurvePoint};
pub use fid::{fid, sqrtm_psd, trace_sqrt_product, CLAMP_TOL};
pub use inception::{inception_score, inception_score_from_probs, softmax, ISResult};
pub use power::{
    mean_power_spectrum, mean_power_spectrum_of, spectral_distance, MeanSpectrum,
    DEFAULT_SPECTRUM_SIDE,
};
pub use stats::FeatureStats;

use crate::gray::ImageError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0}")]
    BadArgument(String),
    #[error("dimension mismatch ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("{what} is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd {
        what: String,
        eigenvalue: f64,
        tolerance: f64,
    },
    #[error("image {image_id} has no CLIP score")]
    MissingScore { image_id: u64 },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
