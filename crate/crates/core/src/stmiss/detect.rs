use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Basis};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub detected: bool,
    /// `(1/alpha) lambda_max(Psi L L^T Psi)`.
    pub statistic: f64,
    /// `2 eps^2 lambda^+`.
    pub threshold: f64,
}

/// Change test on a filled batch: the per-sample energy of `L^` outside the
/// current estimate, compared against `2 eps^2 lambda^+`.
pub fn detect_change(phat: &Basis, lhat: ArrayView2<f64>, eps: f64, lambda_plus: f64) -> Result<Detection> {
    if lhat.nrows() != phat.n() {
        return Err(Error::dims(format!("n = {}", phat.n()), lhat.nrows()));
    }
    if !(lambda_plus > 0.0) {
        return Err(Error::InvalidParameter("lambda_plus must be positive".into()));
    }
    let alpha = lhat.ncols() as f64;
    let outside = phat.project_out_mat(lhat);
    let s = spectral_norm(outside.view());
    let statistic = s * s / alpha;
    let threshold = 2.0 * eps * eps * lambda_plus;
    Ok(Detection { detected: statistic >= threshold, statistic, threshold })
}
