//! Federated robust subspace tracking over a noisy aggregation channel.
//!
//! Each time step splits the mini-batch's columns across nodes. Nodes fill
//! their own columns against the broadcast estimate (projected least squares,
//! or modified-CS outlier removal followed by LS debiasing), and the new
//! estimate comes from the federated power method warm-started at the old one.
//! Only power-method aggregates ever cross the channel. Every step checks
//! that the number of channel uses matches the configured iteration counts.
//!
//! Change detection mirrors the centralized tracker, with the outside-energy
//! eigenvalue computed by a rank-1 federated power method over node-local
//! projected blocks.

mod detect;
mod fill;
mod init;
mod tracker;

pub use detect::{fed_detect_change, FedDetection};
pub use fill::{concat_columns, fed_modcs_fill, split_batch, FillMode, NodeFill};
pub use init::{init_fed, perturb_basis, FedInit, InitMode};
pub use tracker::{fed_bound, FedConfig, FedDetectionConfig, FedOutput, FedRecord, FedTrackerState, FED_CSV_HEADER};
