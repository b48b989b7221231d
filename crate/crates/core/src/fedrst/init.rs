use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{fedoa_pm, Channel, PmConfig};
use crate::linalg::Basis;
use crate::rng;
use crate::synth::{random_complement, ObservationBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    /// The true first subspace turned by exactly `eps_init`.
    Oracle { eps_init: f64 },
    /// Federated power method from a random start on the zero-filled first
    /// batch, which must be outlier-free.
    OutlierFreeFirstBatch { iterations: usize },
}

/// `P` with its first column turned by `arcsin(eps)` toward a random unit
/// vector orthogonal to `P`, so `dist` to `P` is exactly `eps`.
pub fn perturb_basis(p: &Basis, eps: f64, seed: u64) -> Result<Basis> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidMode(format!("oracle init needs 0 <= eps_init < 1, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(p.clone());
    }
    let q = random_complement(p, 1, &mut rng::stream(seed, "oracle-init", 0))?;
    let theta = eps.asin();
    let mut m = p.view().to_owned();
    let turned = &p.view().column(0) * theta.cos() + &q.view().column(0) * theta.sin();
    m.column_mut(0).assign(&turned);
    Basis::new(m)
}

/// Result of the initialization step.
#[derive(Clone, Debug)]
pub struct FedInit {
    pub basis: Basis,
    pub sigma1_hat: Option<f64>,
    pub transmissions: u64,
}

/// `P^_1` for the federated tracker. `truth` is required in oracle mode;
/// `shards` are the node blocks of the first batch.
pub fn init_fed(
    mode: InitMode,
    truth: Option<&Basis>,
    first: &[ObservationBatch],
    r: usize,
    channel: &mut Channel,
    seed: u64,
) -> Result<FedInit> {
    match mode {
        InitMode::Oracle { eps_init } => {
            let p = truth.ok_or_else(|| Error::InvalidMode("oracle init needs the true first subspace".into()))?;
            Ok(FedInit { basis: perturb_basis(p, eps_init, seed)?, sigma1_hat: None, transmissions: 0 })
        }
        InitMode::OutlierFreeFirstBatch { iterations } => {
            if first.iter().any(|b| b.outlier_support.iter().any(|s| !s.is_empty())) {
                return Err(Error::InvalidMode("first batch carries outliers; use oracle init".into()));
            }
            if first.is_empty() || iterations == 0 {
                return Err(Error::InvalidMode("first-batch init needs data and at least one iteration".into()));
            }
            let shards: Vec<ArrayView2<f64>> = first.iter().map(|b| b.y.view()).collect();
            let total: usize = shards.iter().map(|z| z.len_of(Axis(1))).sum();
            if total < r {
                return Err(Error::InvalidRank { r, rows: shards[0].nrows(), cols: total });
            }
            let cfg = PmConfig { init_seed: rng::derive_seed(seed, "fed-init", 0), ..PmConfig::new(r, iterations) };
            let res = fedoa_pm(&shards, &cfg, None, channel, None)?;
            Ok(FedInit { basis: res.basis, sigma1_hat: Some(res.sigma1_hat), transmissions: res.transmissions })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist;
    use crate::stmiss::init_first_batch;
    use crate::synth::{generate, random_basis, ChangeModel, DataConfig, MaskMode};

    #[test]
    fn oracle_zero_is_identity() {
        let p = random_basis(20, 3, &mut rng::stream(1, "basis", 0)).unwrap();
        let mut ch = Channel::new(0.0, 0).unwrap();
        let out = init_fed(InitMode::Oracle { eps_init: 0.0 }, Some(&p), &[], 3, &mut ch, 0).unwrap();
        assert_eq!(out.basis, p);
        assert_eq!(ch.transmissions(), 0);
    }

    #[test]
    fn oracle_hits_requested_distance() {
        let p = random_basis(50, 4, &mut rng::stream(2, "basis", 0)).unwrap();
        for (i, eps) in [1e-6, 0.1, 0.5, 0.95].into_iter().enumerate() {
            let q = perturb_basis(&p, eps, i as u64).unwrap();
            assert!((dist(&q, &p).unwrap() - eps).abs() < 1e-8, "eps = {eps}");
        }
    }

    #[test]
    fn modes_reject_bad_input() {
        let mut ch = Channel::new(0.0, 0).unwrap();
        let p = random_basis(10, 2, &mut rng::stream(3, "basis", 0)).unwrap();
        assert!(matches!(init_fed(InitMode::Oracle { eps_init: 0.1 }, None, &[], 2, &mut ch, 0), Err(Error::InvalidMode(_))));
        assert!(matches!(init_fed(InitMode::Oracle { eps_init: 1.0 }, Some(&p), &[], 2, &mut ch, 0), Err(Error::InvalidMode(_))));
        assert!(matches!(
            init_fed(InitMode::OutlierFreeFirstBatch { iterations: 5 }, None, &[], 2, &mut ch, 0),
            Err(Error::InvalidMode(_))
        ));
    }

    #[test]
    fn noiseless_single_node_matches_first_batch_svd() {
        let ds = generate(&DataConfig {
            n: 60,
            d: 60,
            r: 3,
            alpha: 60,
            model: ChangeModel::Rotation { delta: 0.0, generator: Default::default() },
            lambda_minus: 1.0,
            lambda_plus: 4.0,
            lambda_v: 0.0,
            r_v: 0,
            mask: MaskMode::Bernoulli { rho: 0.9 },
            outliers: None,
            seed: 4,
        })
        .unwrap();
        let mut ch = Channel::new(0.0, 0).unwrap();
        let mode = InitMode::OutlierFreeFirstBatch { iterations: 300 };
        let out = init_fed(mode, None, &ds.batches[..1], 3, &mut ch, 9).unwrap();
        let central = init_first_batch(&ds.batches[0], 3).unwrap();
        assert!(dist(&out.basis, &central).unwrap() < 1e-8);
        assert_eq!(out.transmissions, 301);
    }
}
