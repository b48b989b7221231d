//! Slow, independent reference implementations.
//!
//! Nothing here shares code with the production kernels: the eigensolver is
//! cyclic Jacobi, QR is modified Gram-Schmidt, least-squares fills are built
//! from explicit dense matrices and Gaussian elimination, and restricted
//! isometry constants come from exhaustive search. Tests and the `verify`
//! suites compare the fast paths against these.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Eigen-pairs of a symmetric matrix by cyclic Jacobi rotations, eigenvalues
/// in decreasing order with matching eigenvector columns.
pub fn jacobi_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let total: f64 = m.iter().map(|x| x * x).sum();
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (c, &i) in order.iter().enumerate() {
        vectors.column_mut(c).assign(&v.column(i));
    }
    (values, vectors)
}

/// Top-`r` left singular vectors and singular values from the Jacobi
/// decomposition of `M M^T`.
pub fn jacobi_svd(m: ArrayView2<f64>, r: usize) -> (Array2<f64>, Array1<f64>) {
    let (vals, vecs) = jacobi_eigen(m.dot(&m.t()).view());
    let u = vecs.slice(ndarray::s![.., ..r]).to_owned();
    let s = vals.slice(ndarray::s![..r]).mapv(|x| x.max(0.0).sqrt());
    (u, s)
}

/// Spectral norm as the square root of the top Jacobi eigenvalue of `M^T M`.
pub fn jacobi_spectral_norm(m: ArrayView2<f64>) -> f64 {
    let (vals, _) = jacobi_eigen(m.t().dot(&m).view());
    vals[0].max(0.0).sqrt()
}

/// Subspace distance as the Jacobi spectral norm of the explicit residual
/// `P2 - P1 (P1^T P2)`, accurate near zero.
pub fn jacobi_dist(p1: ArrayView2<f64>, p2: ArrayView2<f64>) -> f64 {
    let resid = &p2 - &p1.dot(&p1.t().dot(&p2));
    jacobi_spectral_norm(resid.view()).min(1.0)
}

/// Modified Gram-Schmidt QR with re-orthogonalization.
pub fn gram_schmidt(m: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (n, r) = m.dim();
    let mut q = Array2::<f64>::zeros((n, r));
    let mut rr = Array2::<f64>::zeros((r, r));
    for j in 0..r {
        let mut v = m.column(j).to_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let h = q.column(i).dot(&v);
                rr[[i, j]] += h;
                v.scaled_add(-h, &q.column(i));
            }
        }
        let norm = v.dot(&v).sqrt();
        rr[[j, j]] = norm;
        q.column_mut(j).assign(&(v / norm));
    }
    (q, rr)
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[[i, k]].abs().total_cmp(&m[[j, k]].abs())).unwrap();
        if piv != k {
            for c in 0..n {
                m.swap([k, c], [piv, c]);
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[[i, k]] / m[[k, k]];
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                m[[i, c]] -= f * m[[k, c]];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in k + 1..n {
            s -= m[[k, c]] * x[c];
        }
        x[k] = s / m[[k, k]];
    }
    x
}

/// Explicit `n x n` projector complement `I - P P^T`.
pub fn dense_psi(p: ArrayView2<f64>) -> Array2<f64> {
    Array2::<f64>::eye(p.nrows()) - p.dot(&p.t())
}

/// Least-squares fill from explicit matrices:
/// `y - I_T (Psi_T^T Psi_T)^{-1} Psi_T^T (Psi y)`.
///
/// When `y = l + v` with `l` zeroed on `T`, this is `l + e` for the error
/// `e = -I_T (Psi_T^T Psi_T)^{-1} I_T^T Psi (l + v) + v`.
pub fn dense_projected_ls(p: ArrayView2<f64>, y: ArrayView1<f64>, t: &[usize]) -> Array1<f64> {
    let n = p.nrows();
    let psi = dense_psi(p);
    let mut it = Array2::<f64>::zeros((n, t.len()));
    for (c, &i) in t.iter().enumerate() {
        it[[i, c]] = 1.0;
    }
    let psi_t = psi.dot(&it);
    let normal = psi_t.t().dot(&psi_t);
    let rhs = psi_t.t().dot(&psi.dot(&y));
    let z = dense_solve(normal.view(), rhs.view());
    &y - &it.dot(&z)
}

/// Exact `max_{|T| <= s} ||I_T^T P||_2^2` by enumerating every support of
/// size exactly `s` (the maximum is attained there).
pub fn exhaustive_ric(p: ArrayView2<f64>, s: usize) -> f64 {
    let n = p.nrows();
    let s = s.min(n);
    if s == 0 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..s).collect();
    let mut best: f64 = 0.0;
    loop {
        let rows = Array2::from_shape_fn((s, p.ncols()), |(a, c)| p[[idx[a], c]]);
        best = best.max(jacobi_spectral_norm(rows.view()).powi(2));
        // next combination in lexicographic order
        let mut k = s;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < n - s + k {
                idx[k] += 1;
                for m in k + 1..s {
                    idx[m] = idx[m - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Reference modified-CS solve: projected subgradient on the partial l1 norm
/// over the set `{x : ||y - Psi x|| <= xi}`, with diminishing steps and the
/// best feasible iterate retained. `Psi` is passed as an explicit matrix.
///
/// The feasible-set projection is exact: writing `x = x_par + x_perp` with
/// respect to `range(P)`, only `x_perp` enters the constraint, so projecting
/// means pulling `x_perp` radially toward `y_perp`.
pub fn subgradient_modcs(
    p: ArrayView2<f64>,
    y: ArrayView1<f64>,
    known: &[usize],
    xi: f64,
    iters: usize,
) -> (Array1<f64>, f64) {
    let n = p.nrows();
    let psi = dense_psi(p);
    let mut weight = Array1::<f64>::ones(n);
    for &i in known {
        weight[i] = 0.0;
    }
    let y_perp = psi.dot(&y);
    let project = |x: &Array1<f64>| -> Array1<f64> {
        let x_perp = psi.dot(x);
        let diff = &x_perp - &y_perp;
        let norm = diff.dot(&diff).sqrt();
        if norm <= xi {
            return x.clone();
        }
        let target = &y_perp + &(diff * (xi / norm));
        x - &x_perp + &target
    };
    let objective = |x: &Array1<f64>| x.iter().zip(weight.iter()).map(|(a, w)| w * a.abs()).sum::<f64>();
    let mut x = project(&y_perp);
    let mut best = x.clone();
    let mut best_val = objective(&x);
    let scale = y_perp.dot(&y_perp).sqrt().max(xi);
    for k in 0..iters {
        let g = Array1::from_iter(x.iter().zip(weight.iter()).map(|(a, w)| w * a.signum()));
        let gn = g.dot(&g).sqrt();
        if gn == 0.0 {
            break;
        }
        let step = scale / ((k + 1) as f64).sqrt() / gn;
        x = project(&(&x - &(g * step)));
        let val = objective(&x);
        if val < best_val {
            best_val = val;
            best = x.clone();
        }
    }
    (best, best_val)
}

/// Weak-duality lower bound for the modified-CS program. Every `z` with
/// `(Psi z)_M = 0` and `|(Psi z)_i| <= 1` elsewhere gives
/// `min <= z^T y - xi ||z||`; the candidate `z` is built from `direction`
/// (typically the residual `y - Psi x` of a claimed solution) by removing its
/// `M` component and rescaling. Only dense matrices are used.
pub fn modcs_dual_bound(p: ArrayView2<f64>, y: ArrayView1<f64>, known: &[usize], xi: f64, direction: ArrayView1<f64>) -> f64 {
    let n = p.nrows();
    let psi = dense_psi(p);
    let mut z = psi.dot(&direction);
    if !known.is_empty() {
        let mut im = Array2::<f64>::zeros((n, known.len()));
        for (c, &i) in known.iter().enumerate() {
            im[[i, c]] = 1.0;
        }
        let psi_m = psi.dot(&im);
        let normal = psi_m.t().dot(&psi_m);
        let coef = dense_solve(normal.view(), psi_m.t().dot(&z).view());
        z = &z - &psi_m.dot(&coef);
    }
    let pz = psi.dot(&z);
    let scale = (0..n)
        .filter(|i| !known.contains(i))
        .map(|i| pz[i].abs())
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let z = z / scale;
    (z.dot(&y) - xi * z.dot(&z).sqrt()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_on_known_matrix() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigen(a.view());
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs[[0, 0]].abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gram_schmidt_reconstructs() {
        let m = array![[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]];
        let (q, r) = gram_schmidt(m.view());
        assert!((q.dot(&r) - &m).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn dense_solve_small_system() {
        let a = array![[0.0, 2.0], [1.0, 1.0]];
        let x = dense_solve(a.view(), array![4.0, 3.0].view());
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_ric_standard_basis() {
        let p = array![[1.0], [0.0], [0.0]];
        assert!((exhaustive_ric(p.view(), 1) - 1.0).abs() < 1e-15);
    }
}
