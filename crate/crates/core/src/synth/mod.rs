//! Synthetic ground truth: moving subspaces, coefficients, residuals, missing
//! entries and sparse outliers, with a self-audit of every declared bound.

mod io;
mod masks;
pub mod rotation;
mod truth;

pub use io::{read_dataset, write_dataset, Manifest, DATASET_SCHEMA_VERSION};
pub use masks::{gen_masks, gen_outliers, MaskMode, OutlierColumn, OutlierConfig};
pub use rotation::{
    gen_piecewise_sequence, gen_rotation_sequence, geodesic, piecewise_from_bases, random_basis,
    random_complement, rotate, skew_generator, SubspacePath,
};
pub use truth::{
    assemble_observations, build_path, coefficient_variances, gen_coefficients_and_residual, generate,
    max_fractions, svd_split, AuditItem, ChangeModel, DataConfig, Dataset, Generator, GroundTruth,
    ObservationBatch, TruthStats,
};
