//! Reproducible experiment runs: versioned JSON specs, per-seed CSVs and
//! their aggregate, SVG plots, and the acceptance suites.
//!
//! Seeds run in parallel on a rayon pool whose size can be capped with the
//! `SUBTRACK_THREADS` environment variable. Each seed's output depends only on
//! the spec and the seed, so the CSVs are reproducible bit for bit (apart from
//! wall-clock columns, which `zero_timing` blanks to zero).

mod plot;
mod run;
mod spec;
mod table;
mod verify;

pub use plot::{plot_emit, PlotStyle};
pub use run::{
    run_experiment, run_fed, run_init_check, run_pm_sweep, run_rstmiss, run_seed, run_stmiss, spiked_data,
    thread_cap, track_dataset, write_atomic, ExperimentOutput, FedRun, PmRunResult, RobustRun, RunOptions,
    SeedOutput, TrackRun, THREADS_ENV,
};
pub use spec::{
    builtin, default_detection, eps_nolev, ExperimentSpec, FedParams, InitCheck, PmRun, PmSweep, RobustParams,
    Scenario, TrackParams, BUILTIN_SPECS, DEFAULT_TRIALS, SPEC_SCHEMA_VERSION,
};
pub use table::{aggregate, Table};
pub use verify::{robust_decay_params, verify, verify_with, Status, VerifyEntry, VerifyReport, VerifySpec, SUITES};
