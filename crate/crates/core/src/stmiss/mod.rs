//! Centralized subspace tracking from data with missing entries.
//!
//! Each mini-batch is filled by projected least squares against the previous
//! estimate and the estimate is replaced by the top-`r` left singular
//! vectors of the filled batch. The detection variant runs that update a fixed
//! number of times after (re)initialization, then tests every new batch for
//! energy outside the current estimate, re-initializing from the raw
//! previous batch when a change is declared.

mod bounds;
mod detect;
mod tracker;

pub use bounds::{
    bound_recursion, contraction_count, default_k_updates, pca_sddn_bound, piecewise_bound, recommended_alpha,
    simple_pca_bound, simplified_bound, theoretical_bound, SddnCheck,
};
pub use detect::{detect_change, Detection};
pub use tracker::{
    fill_batch, init_first_batch, mean_relative_error, simple_pca_baseline, BatchOutput, BatchRecord, BatchTruth,
    DetectionConfig, LambdaSource, Phase, TrackerConfig, TrackerState, STMISS_CSV_HEADER,
};
