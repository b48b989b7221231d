use serde::{Deserialize, Serialize};

use super::pm::random_init;
use crate::error::{Error, Result};
use crate::linalg::{qr_orthonormalize, r_svd, Basis};
use crate::rng;

/// Default multiplier on the order-of-magnitude iteration counts.
pub const DEFAULT_C_L: f64 = 2.0;

/// Constant in the random-initialization bound `dist_0^2 <= 1 - c0 / (gamma n r)`.
/// Frozen from a pilot run: n = 50, r = 3, gamma = 100, 100000 draws, set to
/// the empirical 1% quantile of `1 - dist_0^2` times `gamma n r` (see
/// `tests::pilot_reproduces_frozen_c0`).
pub const RANDOM_INIT_C0: f64 = 0.0122;

/// `L = ceil(C_L log(n r / eps) / log(1/R))` from a random start, or
/// `ceil(C_L log(1 / (eps sqrt(1 - eps0^2))) / log(1/R))` from a start at
/// distance `eps0`; at least 1.
pub fn required_iterations(ratio: f64, eps: f64, init_quality: Option<f64>, n: usize, r: usize, c_l: f64) -> Result<usize> {
    if !(ratio < 0.99) {
        return Err(Error::RatioTooLarge(ratio));
    }
    if !(eps > 0.0 && eps < 1.0 / 3.0) || !(ratio >= 0.0) || !(c_l > 0.0) {
        return Err(Error::InvalidParameter(format!("need 0 < eps < 1/3, R >= 0, C_L > 0 (eps = {eps}, R = {ratio})")));
    }
    let numerator = match init_quality {
        None => ((n * r) as f64 / eps).ln(),
        Some(e0) => {
            if !(0.0..1.0).contains(&e0) {
                return Err(Error::InvalidParameter(format!("init quality must lie in [0, 1), got {e0}")));
            }
            (1.0 / (eps * (1.0 - e0 * e0).sqrt())).ln()
        }
    };
    if ratio == 0.0 {
        return Ok(1);
    }
    Ok(((c_l * numerator / (1.0 / ratio).ln()).ceil() as usize).max(1))
}

/// `(Gamma_num, Gamma_denom)` with
/// `Gamma_num^2 = sum_{i<eta} sigma_{r+1}^{2i} / sigma_r^{2 eta - 2}` and the
/// same with `sigma_r` in the numerator sum. Terms are formed in log space.
pub fn gamma_factors(eta: usize, sigma_r: f64, sigma_r1: f64) -> (f64, f64) {
    assert!(eta >= 1 && sigma_r > 0.0, "gamma factors need eta >= 1 and sigma_r > 0");
    let denom_log = (2 * eta - 2) as f64 * sigma_r.ln();
    let series = |base: f64| -> f64 {
        (0..eta)
            .map(|i| {
                if i == 0 {
                    (-denom_log).exp()
                } else if base == 0.0 {
                    0.0
                } else {
                    (2.0 * i as f64 * base.ln() - denom_log).exp()
                }
            })
            .sum::<f64>()
    };
    (series(sigma_r1).sqrt(), series(sigma_r).sqrt())
}

/// Spectral quantities of one power-method problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmAnalysis {
    /// `sigma_{r+1} / sigma_r`.
    pub ratio: f64,
    /// `sigma_c / sigma_r`.
    pub nsr: f64,
    pub eta: usize,
    pub gamma_num: f64,
    pub gamma_denom: f64,
}

impl PmAnalysis {
    /// `sigma_r`, `sigma_r1` are eigenvalues of `Z Z^T`.
    pub fn new(sigma_r: f64, sigma_r1: f64, sigma_c: f64, eta: usize) -> Self {
        let (gamma_num, gamma_denom) = gamma_factors(eta, sigma_r, sigma_r1);
        PmAnalysis { ratio: sigma_r1 / sigma_r, nsr: sigma_c / sigma_r, eta, gamma_num, gamma_denom }
    }

    pub fn descent_bound(&self, dist_prev: f64, n: usize, r: usize) -> Descent {
        descent_bound(dist_prev, self.eta, self.ratio, self.nsr, n, r, self.gamma_num, self.gamma_denom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Descent {
    Bound(f64),
    /// The denominator is not positive.
    Infeasible,
}

impl Descent {
    pub fn holds_for(&self, measured: f64) -> bool {
        match self {
            Descent::Bound(b) => measured <= *b,
            Descent::Infeasible => true,
        }
    }
}

/// `(R^eta d + sqrt(n) NSR Gamma_num) / (0.9 sqrt(1 - d^2) - sqrt(r) NSR Gamma_denom)`.
#[allow(clippy::too_many_arguments)]
pub fn descent_bound(
    dist_prev: f64,
    eta: usize,
    ratio: f64,
    nsr: f64,
    n: usize,
    r: usize,
    gamma_num: f64,
    gamma_denom: f64,
) -> Descent {
    let denom = 0.9 * (1.0 - dist_prev * dist_prev).max(0.0).sqrt() - (r as f64).sqrt() * nsr * gamma_denom;
    if !(denom > 0.0) {
        return Descent::Infeasible;
    }
    let num = ratio.powi(eta as i32) * dist_prev + (n as f64).sqrt() * nsr * gamma_num;
    Descent::Bound(num / denom)
}

/// Smallest cosine squared of the principal angles between `a` and `b`, i.e.
/// `1 - dist^2` computed without cancellation.
pub fn min_cos_sq(a: &Basis, b: &Basis) -> Result<f64> {
    let m = a.view().t().dot(&b.view());
    let r = m.nrows().min(m.ncols());
    let s = r_svd(m.view(), r)?;
    Ok(s.singular_values[r - 1].powi(2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitQuality {
    pub success_rate: f64,
    /// `1 - dist_0^2` per trial.
    pub min_cos_sq: Vec<f64>,
    pub threshold: f64,
}

/// Fraction of Gaussian starts with `1 - dist_0^2 >= c0 / (gamma n r)`
/// against one fixed random target.
pub fn random_init_quality_check(n: usize, r: usize, gamma: f64, trials: usize, c0: f64, seed: u64) -> Result<InitQuality> {
    if r == 0 || r > n {
        return Err(Error::InvalidRank { r, rows: n, cols: r });
    }
    let target = qr_orthonormalize(rng::gaussian_matrix(&mut rng::stream(seed, "init-target", 0), n, r).view())?.0;
    let threshold = c0 / (gamma * (n * r) as f64);
    let mut values = Vec::with_capacity(trials);
    for t in 0..trials {
        let start = random_init(n, r, rng::derive_seed(seed, "init-trial", t as u64))?;
        values.push(if r == n { 1.0 } else { min_cos_sq(&start, &target)? });
    }
    let hits = values.iter().filter(|&&v| v >= threshold).count();
    Ok(InitQuality { success_rate: hits as f64 / trials.max(1) as f64, min_cos_sq: values, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterations_formula() {
        assert_eq!(required_iterations(0.5, 0.1, None, 100, 5, 1.0).unwrap(), 13);
        let perfect = required_iterations(0.5, 0.1, Some(0.0), 100, 5, 1.0).unwrap();
        assert_eq!(perfect, (10f64.ln() / 2f64.ln()).ceil() as usize);
        assert!(required_iterations(0.989, 0.1, None, 10, 1, 2.0).unwrap() > 100);
        assert!(matches!(required_iterations(0.99, 0.1, None, 10, 1, 2.0), Err(Error::RatioTooLarge(_))));
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_factors(1, 3.0, 1.0), (1.0, 1.0));
        let (num, den) = gamma_factors(2, 2.0, 1.0);
        assert!((num - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((den - 1.25f64.sqrt()).abs() < 1e-15);
        let (a, b) = gamma_factors(5, 1.7, 1.7);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn gamma_survives_large_eta() {
        let (num, den) = gamma_factors(400, 50.0, 45.0);
        assert!(num.is_finite() && den.is_finite() && num > 0.0);
    }

    #[test]
    fn descent_examples() {
        let noiseless = descent_bound(0.3, 2, 0.5, 0.0, 100, 4, 1.0, 1.0);
        assert_eq!(noiseless, Descent::Bound(0.25 * 0.3 / (0.9 * (1.0f64 - 0.09).sqrt())));
        let floor = descent_bound(0.0, 1, 0.5, 0.01, 100, 4, 1.0, 1.0);
        assert_eq!(floor, Descent::Bound(10.0 * 0.01 / (0.9 - 2.0 * 0.01)));
        assert_eq!(descent_bound(0.0, 1, 0.5, 1.0, 100, 4, 1.0, 1.0), Descent::Infeasible);
    }

    #[test]
    fn full_space_start_is_exact() {
        let q = random_init_quality_check(4, 4, 10.0, 100, RANDOM_INIT_C0, 1).unwrap();
        assert_eq!(q.success_rate, 1.0);
    }

    #[test]
    fn pilot_reproduces_frozen_c0() {
        let (n, r, gamma) = (50usize, 3usize, 100.0);
        let mut q = random_init_quality_check(n, r, gamma, 100_000, 1.0, 0xC0).unwrap().min_cos_sq;
        q.sort_by(f64::total_cmp);
        let quantile = q[q.len() / 100];
        let c0 = quantile * gamma * (n * r) as f64;
        assert!((c0 / RANDOM_INIT_C0 - 1.0).abs() < 0.1, "pilot c0 = {c0}");
    }
}
