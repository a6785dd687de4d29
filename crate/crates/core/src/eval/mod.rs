//! Human evaluation: session assignment, the rating log, and aggregation of
//! ratings by cumulative refinement stage.

mod aggregate;
mod ratings;
mod session;

use thiserror::Error;

pub use aggregate::{
    aggregate_by_stage, format_percent, rating_curve, relative_change, StageRow, StageTable,
    BUCKETS,
};
pub use ratings::{
    now_ms, read_ratings, resolve_latest, Progress, RatingLog, RatingRecord, RatingSubmission,
    SCORE_MAX, SCORE_MIN,
};
pub use session::{create_sessions, EvalSession};

use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    BadArgument(String),
    #[error("pool has {available} images but {required} are required")]
    PoolTooSmall { required: usize, available: usize },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("image {image_id} is not part of session `{session_id}`")]
    ForeignImage { session_id: String, image_id: u64 },
    #[error("{field} must be between 1 and 5, got {value}")]
    OutOfRange { field: &'static str, value: i64 },
    #[error("image {0} is not in the manifest")]
    UnknownImage(u64),
    #[error("image {image_id} has no refinement survival flags")]
    Unrefined { image_id: u64 },
    #[error("image {image_id} has no CLIP score")]
    NoClipScore { image_id: u64 },
    #[error(transparent)]
    Store(#[from] StoreError),
}
