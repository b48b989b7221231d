//! Sparse recovery with partial support knowledge and the centralized robust
//! tracker built on it.
//!
//! Each column is projected away from the current estimate, the outliers are
//! located by modified-CS (the missing set is known support and costs
//! nothing), the support is thresholded, and the entries on it are refilled
//! by projected least squares.

mod modcs;
mod pipeline;
mod ric;
mod tracker;

pub use modcs::{solve_modcs, ModCsSolution, SolverConfig, FEASIBILITY_TOL};
pub use pipeline::{
    ls_debias, recover_column, rst_fill_batch, support_scores, threshold_support, ColumnFailure, ColumnRecovery,
    CsConfig, RstFill, ThresholdMode,
};
pub use ric::{ric_bound, RicBound, EXHAUSTIVE_LIMIT};
pub use tracker::{rst_csv_header, RstConfig, RstOutput, RstRecord, RstState};
