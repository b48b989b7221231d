//! Closed-form error bounds used as test thresholds and CSV columns.

use serde::{Deserialize, Serialize};

/// `max(0.1 * 0.3^{j-1} + delta_tv * (0.3 + ... + 0.3^{j-1}), eps_nolev)`.
pub fn theoretical_bound(j: usize, delta_tv: f64, eps_nolev: f64) -> f64 {
    assert!(j >= 1, "batch index is 1-based");
    let decay = 0.1 * 0.3f64.powi(j as i32 - 1);
    let drift: f64 = (1..j).map(|i| 0.3f64.powi(i as i32)).sum();
    (decay + delta_tv * drift).max(eps_nolev)
}

/// The simplified form `max(0.1 * 0.3^{j-1} + 0.5 delta_tv, eps_nolev)`.
pub fn simplified_bound(j: usize, delta_tv: f64, eps_nolev: f64) -> f64 {
    assert!(j >= 1, "batch index is 1-based");
    (0.1 * 0.3f64.powi(j as i32 - 1) + 0.5 * delta_tv).max(eps_nolev)
}

/// The recursion `eps_1 = max(eps, 0.25 q_1)` with `q_1 = 0.1`, then
/// `eps_j = max(eps, 0.25 * 1.2 * (eps_{j-1} + delta_tv))`; returns
/// `eps_1, ..., eps_j`.
pub fn bound_recursion(j: usize, eps: f64, delta_tv: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(j);
    let mut e = eps.max(0.25 * 0.1);
    for _ in 0..j {
        out.push(e);
        e = eps.max(0.25 * 1.2 * (e + delta_tv));
    }
    out
}

/// Simple-PCA bound `max(0.1 * 0.25, eps_nolev)`.
pub fn simple_pca_bound(eps_nolev: f64) -> f64 {
    (0.1 * 0.25f64).max(eps_nolev)
}

/// Piecewise-constant bound: `(0.2 + 2 eps) 0.25 + eps` at a change batch and
/// `(0.2 + 2 eps) 0.3^{(j - j_gamma) - 1} + eps` after it.
pub fn piecewise_bound(j: usize, j_gamma: usize, eps: f64) -> f64 {
    assert!(j >= j_gamma);
    if j == j_gamma {
        (0.2 + 2.0 * eps) * 0.25 + eps
    } else {
        (0.2 + 2.0 * eps) * 0.3f64.powi((j - j_gamma) as i32 - 1) + eps
    }
}

/// `ceil(log(1/eps) / log(1/0.3))`, the number of 0.3-contractions that take
/// an O(1) error down to `eps`.
pub fn contraction_count(eps: f64) -> usize {
    ((1.0 / eps).ln() / (1.0 / 0.3f64).ln()).ceil() as usize
}

/// Default number of update batches before detection starts.
pub fn default_k_updates(eps: f64) -> usize {
    contraction_count(eps) + 2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SddnCheck {
    /// Whether `7 sqrt(b) q f + lambda_v^+/lambda^- < 0.4 eps`.
    pub feasible: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `C max(q^2 f^2 / eps^2, (lambda_v^+/lambda^-) f / eps^2) r log n`.
    pub alpha_star: f64,
}

/// Sufficient conditions for PCA in sparse data-dependent noise.
#[allow(clippy::too_many_arguments)]
pub fn pca_sddn_bound(q: f64, b: f64, f: f64, noise_ratio: f64, eps: f64, c: f64, r: usize, n: usize) -> SddnCheck {
    let lhs = 7.0 * b.sqrt() * q * f + noise_ratio;
    let rhs = 0.4 * eps;
    let rlogn = r as f64 * (n as f64).ln();
    let alpha_star = c * (q * q * f * f / (eps * eps)).max(noise_ratio * f / (eps * eps)) * rlogn;
    SddnCheck { feasible: q <= 3.0 && lhs < rhs, lhs, rhs, alpha_star }
}

/// `C f^2 r log n`, the mini-batch size the slow-change guarantee asks for.
pub fn recommended_alpha(c: f64, f: f64, r: usize, n: usize) -> f64 {
    c * f * f * r as f64 * (n as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert!((theoretical_bound(1, 0.0, 0.01) - 0.1).abs() < 1e-15);
        assert!((theoretical_bound(60, 0.0, 0.01) - 0.01).abs() < 1e-15);
        assert!((theoretical_bound(2, 0.1, 1e-3) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn recursion_never_exceeds_closed_form() {
        for &dtv in &[0.0, 0.01, 0.1] {
            let rec = bound_recursion(30, 0.001, dtv);
            for (i, e) in rec.iter().enumerate() {
                assert!(*e <= theoretical_bound(i + 1, dtv, 0.001) + 1e-15);
            }
        }
    }

    #[test]
    fn sddn_examples() {
        let c = pca_sddn_bound(0.5, 0.0, 1.0, 0.0, 1e-6, 1.0, 5, 100);
        assert!(c.feasible);
        let c = pca_sddn_bound(0.1, 1e-4, 1.0, 0.04, 0.2, 1.0, 30, 1000);
        assert!((c.lhs - 0.047).abs() < 1e-12 && (c.rhs - 0.08).abs() < 1e-15 && c.feasible);
        let c = pca_sddn_bound(3.0, 1.0, 1.0, 0.0, 0.99, 1.0, 30, 1000);
        assert!(!c.feasible);
    }

    #[test]
    fn piecewise_decays_to_two_eps() {
        let eps = 0.01;
        let k = contraction_count(eps);
        assert!(piecewise_bound(10 + k + 1, 10, eps) <= 2.0 * eps);
        assert_eq!(default_k_updates(0.01), 6);
    }
}
