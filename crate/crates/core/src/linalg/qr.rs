//! Reduced Householder QR with a non-negative diagonal in `R`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::Basis;
use crate::error::{Error, Result};

/// Smallest accepted `|R_kk| / max |R_ii|`.
pub const QR_RANK_TOL: f64 = 1e-12;

/// Factor `M = Q R` with `Q` an `n x r` basis and `R` upper triangular with
/// `R_kk >= 0`. Fails with `RankDeficient` when a diagonal entry of `R` drops
/// below `QR_RANK_TOL` times the largest one.
pub fn qr_orthonormalize(m: ArrayView2<f64>) -> Result<(Basis, Array2<f64>)> {
    let (q, r) = householder_qr(m)?;
    Ok((Basis::from_orthonormal(q), r))
}

pub(crate) fn householder_qr(m: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, r) = m.dim();
    if r == 0 || r > n {
        return Err(Error::InvalidRank { r, rows: n, cols: r });
    }
    let mut a = m.to_owned();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let x = a.slice(s![k.., k]);
        let norm = x.dot(&x).sqrt();
        let mut v = x.to_owned();
        if norm == 0.0 {
            reflectors.push(Array1::zeros(n - k));
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.dot(&v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(Array1::zeros(n - k));
            continue;
        }
        v /= vnorm;
        let mut block = a.slice_mut(s![k.., k..]);
        let w = v.dot(&block);
        for (i, vi) in v.iter().enumerate() {
            let mut row = block.row_mut(i);
            row.scaled_add(-2.0 * vi, &w);
        }
        reflectors.push(v);
    }

    let mut rmat = Array2::zeros((r, r));
    for i in 0..r {
        for j in i..r {
            rmat[[i, j]] = a[[i, j]];
        }
    }
    let diag_max = (0..r).map(|i| rmat[[i, i]].abs()).fold(0.0, f64::max);
    let diag_min = (0..r).map(|i| rmat[[i, i]].abs()).fold(f64::INFINITY, f64::min);
    if !(diag_max > 0.0) || diag_min <= QR_RANK_TOL * diag_max || !diag_max.is_finite() {
        return Err(Error::RankDeficient {
            context: format!("QR diagonal ratio {:e}", diag_min / diag_max),
        });
    }

    let mut q = Array2::zeros((n, r));
    for i in 0..r {
        q[[i, i]] = 1.0;
    }
    for k in (0..r).rev() {
        let v = &reflectors[k];
        let mut block = q.slice_mut(s![k.., ..]);
        let w = v.dot(&block);
        for (i, vi) in v.iter().enumerate() {
            block.row_mut(i).scaled_add(-2.0 * vi, &w);
        }
    }

    for k in 0..r {
        if rmat[[k, k]] < 0.0 {
            rmat.row_mut(k).mapv_inplace(|x| -x);
            q.index_axis_mut(Axis(1), k).mapv_inplace(|x| -x);
        }
    }
    Ok((q, rmat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_factors_trivially() {
        let (q, r) = qr_orthonormalize(Array2::eye(3).view()).unwrap();
        assert_eq!(q.view(), Array2::<f64>::eye(3).view());
        assert_eq!(r, Array2::<f64>::eye(3));
    }

    #[test]
    fn scaled_identity() {
        let m = Array2::<f64>::eye(2) * 2.0;
        let (q, r) = qr_orthonormalize(m.view()).unwrap();
        assert_eq!(q.view(), Array2::<f64>::eye(2).view());
        assert_eq!(r, Array2::<f64>::eye(2) * 2.0);
    }

    #[test]
    fn diagonal_of_r_non_negative() {
        let m = array![[-1.0, 2.0], [0.0, -3.0], [0.0, 0.0]];
        let (q, r) = qr_orthonormalize(m.view()).unwrap();
        assert!(r[[0, 0]] > 0.0 && r[[1, 1]] > 0.0);
        let back = q.view().dot(&r);
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let m = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert!(matches!(
            qr_orthonormalize(m.view()),
            Err(Error::RankDeficient { .. })
        ));
        assert!(qr_orthonormalize(Array2::zeros((4, 2)).view()).is_err());
    }
}
