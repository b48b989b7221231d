use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{fedoa_pm, Channel, PmConfig};
use crate::linalg::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedDetection {
    pub detected: bool,
    /// Top eigenvalue of `sum_k Psi L_k L_k^T Psi` as seen through the channel.
    pub lambda_hat: f64,
    /// `lambda_hat / alpha`, compared against `threshold`.
    pub statistic: f64,
    /// `2 eps^2 lambda^+`.
    pub threshold: f64,
    pub transmissions: u64,
}

/// Change test without moving data: every node projects its block away from
/// the broadcast `phat`, and a rank-1 federated power method over those
/// blocks estimates the top eigenvalue of the pooled outside energy.
#[allow(clippy::too_many_arguments)]
pub fn fed_detect_change(
    phat: &Basis,
    shards: &[ArrayView2<f64>],
    channel: &mut Channel,
    iterations: usize,
    eps: f64,
    lambda_plus: f64,
    seed: u64,
) -> Result<FedDetection> {
    if !(lambda_plus > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidParameter("detection needs eps > 0 and lambda_plus > 0".into()));
    }
    let projected: Vec<Array2<f64>> = shards.par_iter().map(|z| phat.project_out_mat(*z)).collect();
    let views: Vec<ArrayView2<f64>> = projected.iter().map(|z| z.view()).collect();
    let alpha: usize = shards.iter().map(|z| z.ncols()).sum();
    let cfg = PmConfig { init_seed: seed, ..PmConfig::new(1, iterations.max(1)) };
    let res = fedoa_pm(&views, &cfg, None, channel, None)?;
    let statistic = res.sigma1_hat / alpha as f64;
    let threshold = 2.0 * eps * eps * lambda_plus;
    Ok(FedDetection {
        detected: statistic >= threshold,
        lambda_hat: res.sigma1_hat,
        statistic,
        threshold,
        transmissions: res.transmissions,
    })
}
