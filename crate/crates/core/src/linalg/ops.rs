use ndarray::{Array2, ArrayView2};

use super::{eigen::sym_eigen, svd::top_eigenspace, Basis};
use crate::error::{Error, Result};

/// Subspace distance `||(I - P1 P1^T) P2||_2`.
///
/// The residual `(I - P1 P1^T) P2` is formed explicitly, so distances near
/// zero keep full absolute accuracy instead of being lost in `1 - cos^2`.
pub fn dist(p1: &Basis, p2: &Basis) -> Result<f64> {
    if p1.n() != p2.n() {
        return Err(Error::dims(format!("n = {}", p1.n()), format!("n = {}", p2.n())));
    }
    let resid = p1.project_out_mat(p2.view());
    Ok(spectral_norm(resid.view()).min(1.0))
}

/// Largest singular value, from the top eigenvalue of the smaller Gram matrix.
pub fn spectral_norm(m: ArrayView2<f64>) -> f64 {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let g = if cols <= rows { m.t().dot(&m) } else { m.dot(&m.t()) };
    let scale = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let top = top_eigenspace(g.view(), 1);
    top.values[0].max(0.0).sqrt()
}

/// Largest eigenvalue of a symmetric matrix (lower triangle read).
pub fn lambda_max(a: ArrayView2<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    top_eigenspace(a, 1).values[0]
}

/// `mu = (n / r) * max_m ||P^(m)||^2`, the smallest incoherence parameter
/// that `P` satisfies.
pub fn incoherence(p: &Basis) -> f64 {
    let (n, r) = (p.n() as f64, p.r() as f64);
    let max_row = p
        .view()
        .rows()
        .into_iter()
        .map(|row| row.dot(&row))
        .fold(0.0, f64::max);
    n / r * max_row
}

/// `exp(B)` for a square matrix by scaling and squaring a Taylor series.
/// Intended for the skew-symmetric rotation generators, where the result is
/// orthogonal.
pub fn expm(b: ArrayView2<f64>) -> Array2<f64> {
    let n = b.nrows();
    assert_eq!(n, b.ncols(), "expm needs a square matrix");
    let norm1 = b
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    // scale so that ||B / 2^s||_1 <= 1/2; 20 Taylor terms then reach 1e-25
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = b.to_owned() * scale;
    let mut result = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..=20 {
        term = term.dot(&a) / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// `sqrt(1 - sigma_min^2(P1^T P2))` through principal angles; used only to
/// cross-check `dist` for equal ranks.
pub fn dist_by_angles(p1: &Basis, p2: &Basis) -> f64 {
    let c = p1.view().t().dot(&p2.view());
    let g = c.t().dot(&c);
    let e = sym_eigen(g.view());
    let smin2 = e.values[e.values.len() - 1].clamp(0.0, 1.0);
    (1.0 - smin2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dist_trivial_cases() {
        let p = Basis::standard(4, &[0, 1]).unwrap();
        assert_eq!(dist(&p, &p).unwrap(), 0.0);
        let e1 = Basis::standard(2, &[0]).unwrap();
        let e2 = Basis::standard(2, &[1]).unwrap();
        assert_eq!(dist(&e1, &e2).unwrap(), 1.0);
        let q = Basis::standard(3, &[0]).unwrap();
        assert!(matches!(dist(&e1, &q), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spectral_norm_trivial_cases() {
        assert!((spectral_norm(array![[5.0, 0.0], [0.0, 1.0]].view()) - 5.0).abs() < 1e-15);
        assert_eq!(spectral_norm(Array2::<f64>::zeros((3, 2)).view()), 0.0);
        // wide input goes through the other Gram matrix
        assert!((spectral_norm(array![[3.0, 4.0]].view()) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn incoherence_extremes() {
        let p = Basis::standard(8, &[0, 1]).unwrap();
        assert!((incoherence(&p) - 4.0).abs() < 1e-15);
        // two normalized Hadamard columns of order 4
        let h = array![[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]] * 0.5;
        let p = Basis::new(h).unwrap();
        assert!((incoherence(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expm_of_planar_rotation_generator() {
        let t = 0.7_f64;
        let b = array![[0.0, -t], [t, 0.0]];
        let e = expm(b.view());
        let want = array![[t.cos(), -t.sin()], [t.sin(), t.cos()]];
        assert!((&e - &want).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn expm_large_argument_stays_orthogonal() {
        let b = array![[0.0, -40.0, 3.0], [40.0, 0.0, -2.0], [-3.0, 2.0, 0.0]];
        let e = expm(b.view());
        let dev = (e.t().dot(&e) - Array2::<f64>::eye(3)).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(dev < 1e-12, "{dev}");
    }
}
