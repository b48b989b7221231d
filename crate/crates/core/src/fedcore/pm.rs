use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::Channel;
use crate::error::{Error, Result};
use crate::linalg::{dist, qr_orthonormalize, sym_eigen, Basis};
use crate::report::fmt_opt;
use crate::rng;

/// Received iterates are rescaled by a power of two once their largest entry
/// leaves `[1 / RESCALE_LIMIT, RESCALE_LIMIT]`, before any QR, so squared
/// entries stay finite.
pub const RESCALE_LIMIT: f64 = 1e150;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmConfig {
    pub r: usize,
    /// Total number of power iterations `L` (channel uses, excluding the
    /// eigenvalue transmission).
    pub iterations: usize,
    /// QR normalization period.
    #[serde(default = "one")]
    pub eta: usize,
    /// Seed of the Gaussian initialization when no estimate is given.
    #[serde(default)]
    pub init_seed: u64,
    /// Keep every iterate (normalized or raw) in the result.
    #[serde(default)]
    pub keep_iterates: bool,
}

fn one() -> usize {
    1
}

impl PmConfig {
    pub fn new(r: usize, iterations: usize) -> Self {
        PmConfig { r, iterations, eta: 1, init_seed: 0, keep_iterates: false }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.r == 0 || self.r > n {
            return Err(Error::InvalidRank { r: self.r, rows: n, cols: self.r });
        }
        if self.eta == 0 {
            return Err(Error::Config("eta must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmIteration {
    /// 1-based iteration index.
    pub l: usize,
    pub dist: Option<f64>,
    /// Only set on the last row.
    pub sigma1_hat: Option<f64>,
    /// Cumulative base-2 exponent removed from raw iterates so far.
    pub scaled: i32,
    pub normalized: bool,
}

pub const PM_CSV_HEADER: &str = "l,dist,sigma1_hat,scaled";

impl PmIteration {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.l, fmt_opt(self.dist), fmt_opt(self.sigma1_hat), self.scaled)
    }
}

#[derive(Clone, Debug)]
pub struct PmResult {
    pub basis: Basis,
    pub sigma1_hat: f64,
    pub trace: Vec<PmIteration>,
    /// Iterates `U_1 .. U_L` when requested (orthonormal on normalization steps).
    pub iterates: Vec<Array2<f64>>,
    /// Channel uses by this call.
    pub transmissions: u64,
}

/// Gaussian `n x r` start, orthonormalized.
pub fn random_init(n: usize, r: usize, seed: u64) -> Result<Basis> {
    let mut stream = rng::stream(seed, "pm-init", 0);
    Ok(qr_orthonormalize(rng::gaussian_matrix(&mut stream, n, r).view())?.0)
}

fn node_products(shards: &[ArrayView2<f64>], u: &Array2<f64>) -> Vec<Array2<f64>> {
    shards.par_iter().map(|z| z.dot(&z.t().dot(u))).collect()
}

fn rescale(u: &mut Array2<f64>) -> i32 {
    let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 || !max.is_finite() || (1.0 / RESCALE_LIMIT..=RESCALE_LIMIT).contains(&max) {
        return 0;
    }
    let e = max.log2().round() as i32;
    u.mapv_inplace(|v| v * 2f64.powi(-e));
    e
}

/// Federated power method over `shards` (node-local `n x d_k` matrices).
/// Each iteration transmits `sum_k Z_k Z_k^T U` through `channel`; the
/// received iterate is orthonormalized every `eta` iterations and carried
/// forward raw otherwise. A final transmission with the output basis gives
/// `sigma1_hat`, the top eigenvalue of the symmetric part of `U^T U~`.
pub fn fedoa_pm(
    shards: &[ArrayView2<f64>],
    cfg: &PmConfig,
    init: Option<&Basis>,
    channel: &mut Channel,
    truth: Option<&Basis>,
) -> Result<PmResult> {
    let n = shards.first().map(|z| z.nrows()).ok_or_else(|| Error::InvalidPartition("no nodes".into()))?;
    if let Some(z) = shards.iter().find(|z| z.nrows() != n) {
        return Err(Error::dims(format!("{n} rows"), z.nrows()));
    }
    cfg.validate(n)?;
    let start = match init {
        Some(b) => {
            if b.n() != n || b.r() != cfg.r {
                return Err(Error::ShapeMismatch { expected: (n, cfg.r), found: (b.n(), b.r()) });
            }
            b.clone()
        }
        None => random_init(n, cfg.r, cfg.init_seed)?,
    };
    let before = channel.transmissions();
    let mut u = start.into_inner();
    let mut normalized = true;
    let mut scaled = 0i32;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut iterates = Vec::new();
    for l in 1..=cfg.iterations {
        let parts = node_products(shards, &u);
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.view()).collect();
        let mut received = channel.transmit(&views)?;
        scaled += rescale(&mut received);
        normalized = l % cfg.eta == 0;
        let mut d = None;
        if normalized {
            let q = qr_orthonormalize(received.view()).map_err(|_| Error::RankCollapse { iteration: l })?.0;
            if let Some(t) = truth {
                d = Some(dist(&q, t)?);
            }
            u = q.into_inner();
        } else {
            if let Some(t) = truth {
                if let Ok((q, _)) = qr_orthonormalize(received.view()) {
                    d = Some(dist(&q, t)?);
                }
            }
            u = received;
        }
        if cfg.keep_iterates {
            iterates.push(u.clone());
        }
        trace.push(PmIteration { l, dist: d, sigma1_hat: None, scaled, normalized });
    }
    let basis = if normalized {
        Basis::new(u).map_err(|_| Error::RankCollapse { iteration: cfg.iterations })?
    } else {
        qr_orthonormalize(u.view()).map_err(|_| Error::RankCollapse { iteration: cfg.iterations })?.0
    };
    // eigenvalue transmission with fresh noise
    let parts = node_products(shards, &basis.view().to_owned());
    let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.view()).collect();
    let b = channel.transmit(&views)?;
    let lam = basis.view().t().dot(&b);
    let sym = (&lam + &lam.t()) * 0.5;
    let sigma1_hat = sym_eigen(sym.view()).values[0];
    if let Some(last) = trace.last_mut() {
        last.sigma1_hat = Some(sigma1_hat);
    }
    Ok(PmResult { basis, sigma1_hat, trace, iterates, transmissions: channel.transmissions() - before })
}

/// CSV body for a trace, one row per iteration.
pub fn trace_csv(trace: &[PmIteration]) -> String {
    let mut s = String::from(PM_CSV_HEADER);
    s.push('\n');
    for row in trace {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::r_svd;
    use crate::rng::{gaussian_matrix, stream};
    use ndarray::{s, Array1};

    fn data(n: usize, d: usize, seed: u64) -> Array2<f64> {
        // decaying spectrum so the top-3 gap is healthy
        let g = gaussian_matrix(&mut stream(seed, "pm-data", 0), n, d);
        let w = Array1::from_iter((0..n).map(|i| 1.0 / (1.0 + i as f64)));
        &g * &w.insert_axis(ndarray::Axis(1))
    }

    #[test]
    fn diagonal_case_converges_to_top_axis() {
        let mut z = Array2::<f64>::eye(5);
        z[[0, 0]] = 2.0;
        let mut ch = Channel::new(0.0, 0).unwrap();
        let res = fedoa_pm(&[z.view()], &PmConfig::new(1, 60), None, &mut ch, None).unwrap();
        assert!((res.basis.view()[[0, 0]].abs() - 1.0).abs() < 1e-12);
        assert!((res.sigma1_hat - 4.0).abs() < 1e-12);
        assert_eq!(res.transmissions, 61);
    }

    #[test]
    fn noiseless_matches_r_svd_for_any_node_count() {
        let z = data(40, 60, 1);
        let oracle = r_svd(z.view(), 3).unwrap().basis;
        for k in [1usize, 4] {
            let shards: Vec<_> = (0..k).map(|i| z.slice(s![.., i * 60 / k..(i + 1) * 60 / k])).collect();
            let mut ch = Channel::new(0.0, 0).unwrap();
            let res = fedoa_pm(&shards, &PmConfig::new(3, 400), None, &mut ch, None).unwrap();
            assert!(dist(&res.basis, &oracle).unwrap() < 1e-8, "K = {k}");
        }
    }

    #[test]
    fn rank_collapse_is_reported() {
        let z = Array2::<f64>::zeros((6, 4));
        let mut ch = Channel::new(0.0, 0).unwrap();
        let err = fedoa_pm(&[z.view()], &PmConfig::new(2, 3), None, &mut ch, None).unwrap_err();
        assert!(matches!(err, Error::RankCollapse { iteration: 1 }));
    }

    #[test]
    fn raw_iterates_are_rescaled() {
        let z = Array2::<f64>::eye(4) * 1e30;
        let mut cfg = PmConfig::new(2, 12);
        cfg.eta = 12;
        let mut ch = Channel::new(0.0, 0).unwrap();
        let res = fedoa_pm(&[z.view()], &cfg, None, &mut ch, None).unwrap();
        assert!(res.trace.iter().any(|t| t.scaled != 0));
        assert!(res.basis.orthonormality_error() < 1e-12);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let z = data(10, 12, 2);
        let mut ch = Channel::new(1e-6, 0).unwrap();
        let truth = r_svd(z.view(), 2).unwrap().basis;
        let res = fedoa_pm(&[z.view()], &PmConfig::new(2, 5), None, &mut ch, Some(&truth)).unwrap();
        let csv = trace_csv(&res.trace);
        assert_eq!(csv.lines().count(), 6);
        assert!(res.trace.iter().all(|t| t.dist.is_some()));
    }
}
