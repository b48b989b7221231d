//! Federated building blocks: column partitioning across nodes, an additive
//! Gaussian over-the-air channel, the federated power method and the
//! calculators that predict its iteration count and error floor.
//!
//! Every node holds a block of columns `Z_k`. One channel use sends the sum of
//! the node messages `Z_k Z_k^T U` plus i.i.d. noise of standard deviation
//! `sigma_c` per entry, so the server only ever sees the noisy aggregate.

mod analysis;
mod channel;
mod pm;
mod topology;

pub use analysis::{
    descent_bound, gamma_factors, min_cos_sq, random_init_quality_check, required_iterations, Descent, InitQuality,
    PmAnalysis, DEFAULT_C_L, RANDOM_INIT_C0,
};
pub use channel::{channel_transmit, Channel};
pub use pm::{fedoa_pm, random_init, trace_csv, PmConfig, PmIteration, PmResult, PM_CSV_HEADER, RESCALE_LIMIT};
pub use topology::{partition_columns, FedTopology, PartitionMode};
