//! Synthesis and curation of prompted texture image datasets.
//!
//! The pipeline runs in four steps:
//!
//! 1. [`prompt`] expands descriptor tables into a ranked prompt manifest.
//! 2. [`generation`] drives a text-to-image backend, retrying and quarantining
//!    safety-flagged outputs.
//! 3. [`refine`] scores every image (frequency cutoff, patch variance, CLIP
//!    alignment) and cuts each texture class by quantile.
//! 4. [`metrics`], [`tav`] and [`eval`] measure the result: Inception Score,
//!    FID, mean power spectra, descriptor-pair CLIP statistics, texture-object
//!    associations and human ratings.
//!
//! [`store`] owns the on-disk formats shared by all of them.

pub mod embed;
pub mod eval;
pub mod generation;
pub mod gray;
pub mod hash;
pub mod metrics;
pub mod prompt;
pub mod refine;
pub mod store;
pub mod tav;
