use ndarray::Array2;
use rand::seq::index::sample;

use crate::linalg::{spectral_norm, Basis};
use crate::rng;

/// Largest `n` for which every support is enumerated.
pub const EXHAUSTIVE_LIMIT: usize = 20;
const SAMPLED_SUPPORTS: usize = 64;

/// Bracket on `delta_s(I - P P^T) = max_{|T| <= s} ||I_T^T P||^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RicBound {
    pub lower: f64,
    pub upper: f64,
}

impl RicBound {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

fn rows_norm_sq(p: &Basis, rows: &[usize]) -> f64 {
    let v = p.view();
    let m = Array2::from_shape_fn((rows.len(), p.r()), |(a, c)| v[[rows[a], c]]);
    spectral_norm(m.view()).powi(2)
}

/// Exact for `n <= 20`; otherwise the sum of the `s` largest squared row
/// norms (capped at 1) above, and the best of the top-row support and a few
/// seeded random supports below.
pub fn ric_bound(phat: &Basis, s: usize) -> RicBound {
    let n = phat.n();
    let s = s.min(n);
    if s == 0 {
        return RicBound { lower: 0.0, upper: 0.0 };
    }
    if n <= EXHAUSTIVE_LIMIT {
        let mut idx: Vec<usize> = (0..s).collect();
        let mut best = 0.0f64;
        loop {
            best = best.max(rows_norm_sq(phat, &idx));
            let Some(k) = (0..s).rev().find(|&k| idx[k] < n - s + k) else { break };
            idx[k] += 1;
            for m in k + 1..s {
                idx[m] = idx[m - 1] + 1;
            }
        }
        let value = best.min(1.0);
        return RicBound { lower: value, upper: value };
    }
    let v = phat.view();
    let mut norms: Vec<(f64, usize)> = (0..n).map(|i| (v.row(i).dot(&v.row(i)), i)).collect();
    norms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let upper = norms[..s].iter().map(|(x, _)| x).sum::<f64>().min(1.0);
    let top: Vec<usize> = norms[..s].iter().map(|&(_, i)| i).collect();
    let mut lower = rows_norm_sq(phat, &top);
    let mut stream = rng::stream(0, "ric-sample", (n * 131 + s) as u64);
    for _ in 0..SAMPLED_SUPPORTS {
        let rows = sample(&mut stream, n, s).into_vec();
        lower = lower.max(rows_norm_sq(phat, &rows));
    }
    RicBound { lower: lower.min(upper), upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exhaustive_ric;
    use crate::rng::stream;
    use crate::synth::random_basis;

    #[test]
    fn standard_basis_row_has_unit_norm() {
        let p = Basis::standard(10, &[0, 1]).unwrap();
        let b = ric_bound(&p, 1);
        assert_eq!(b.upper, 1.0);
        assert!(b.is_exact());
    }

    #[test]
    fn flat_basis_upper_is_s_r_over_n() {
        // two orthogonal +-1/sqrt(n) columns (Walsh rows)
        let n = 64;
        let m = Array2::from_shape_fn((n, 2), |(i, c)| {
            let sign = if c == 0 || i % 2 == 0 { 1.0 } else { -1.0 };
            sign / (n as f64).sqrt()
        });
        let p = Basis::new(m).unwrap();
        let b = ric_bound(&p, 5);
        assert!((b.upper - 5.0 * 2.0 / 64.0).abs() < 1e-15);
        assert!(b.lower <= b.upper);
    }

    #[test]
    fn exhaustive_agrees_with_jacobi_oracle() {
        let p = random_basis(12, 2, &mut stream(2, "basis", 0)).unwrap();
        let b = ric_bound(&p, 3);
        let exact = exhaustive_ric(p.view(), 3);
        assert!((b.upper - exact).abs() < 1e-10);
        assert!((b.lower - exact).abs() < 1e-10);
    }

    #[test]
    fn sampled_bracket_contains_value() {
        let p = random_basis(30, 2, &mut stream(3, "basis", 0)).unwrap();
        let b = ric_bound(&p, 2);
        let exact = exhaustive_ric(p.view(), 2);
        assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12, "{b:?} {exact}");
    }
}
