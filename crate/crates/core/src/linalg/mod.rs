//! Dense kernels shared by every other module.

mod basis;
pub(crate) mod eigen;
mod ls;
mod ops;
mod qr;
mod svd;

pub use basis::{Basis, ORTHONORMAL_TOL};
pub use eigen::{sym_eigen, SymEigen};
pub use ls::{masked_projected_ls, projected_ls_fill, MaskedVector, MAX_CONDITION};
pub use ops::{dist, dist_by_angles, expm, incoherence, lambda_max, spectral_norm};
pub use qr::{qr_orthonormalize, QR_RANK_TOL};
pub use svd::{r_svd, RSvd, RANK_TOL};

pub(crate) use ls::RestrictedSystem;
