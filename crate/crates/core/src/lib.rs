//! Streaming subspace tracking from incomplete and outlier-corrupted data,
//! with federated over-the-air variants and a reproducible experiment harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fedcore;
pub mod fedrst;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod sparse;
pub mod stmiss;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::Basis;
