//! Truncated (top-`r`) SVD.
//!
//! The top eigenvectors of the smaller Gram matrix are found by block
//! orthogonal iteration with Rayleigh-Ritz extraction; Gram matrices small
//! enough to decompose outright go straight to the dense symmetric solver.
//! Singular values are re-measured as column norms of `M V` (or `M^T U`),
//! which keeps tiny singular values accurate to absolute machine precision.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::{dist, eigen::sym_eigen, qr::householder_qr, Basis};
use crate::error::{Error, Result};
use crate::rng;

/// `RankDeficient` when `sigma_r < RANK_TOL * sigma_1`.
pub const RANK_TOL: f64 = 1e-14;
/// Subspace distance between consecutive Ritz bases that ends the iteration.
pub const SUBSPACE_TOL: f64 = 1e-14;
pub const MAX_ITERATIONS: usize = 10_000;
/// Gram matrices up to this size are decomposed directly.
const DIRECT_LIMIT: usize = 256;

/// Top-`r` left singular subspace of a matrix.
#[derive(Clone, Debug)]
pub struct RSvd {
    pub basis: Basis,
    /// Non-increasing, length `r`.
    pub singular_values: Array1<f64>,
    /// Set when `sigma_{r+1} / sigma_r > 1 - 1e-10`; the basis is then one
    /// orthonormal basis of a non-unique invariant subspace.
    pub no_gap: bool,
    pub iterations: usize,
}

/// Top `r` eigenvectors (as columns) and eigenvalues of a symmetric PSD matrix,
/// plus the `(r+1)`-th eigenvalue when it is available.
pub(crate) struct TopEigen {
    pub vectors: Array2<f64>,
    pub values: Array1<f64>,
    pub next_value: Option<f64>,
    pub iterations: usize,
}

pub(crate) fn top_eigenspace(g: ArrayView2<f64>, r: usize) -> TopEigen {
    let k = g.nrows();
    if k <= DIRECT_LIMIT {
        let e = sym_eigen(g);
        return TopEigen {
            vectors: e.vectors.slice(s![.., ..r]).to_owned(),
            values: e.values.slice(s![..r]).to_owned(),
            next_value: (r < k).then(|| e.values[r]),
            iterations: 0,
        };
    }
    let block = (r + (r / 2).max(8)).min(k);
    let mut stream = rng::stream(0x5eed, "r_svd_start", k as u64);
    let start = rng::gaussian_matrix(&mut stream, k, block);
    let mut q = householder_qr(start.view()).expect("gaussian start has full rank").0;
    let mut prev: Option<Basis> = None;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let z = g.dot(&q);
        q = match householder_qr(z.view()) {
            Ok((q, _)) => q,
            // Gram matrix of rank < block: the current block already spans
            // the whole range; fall through to the Ritz step.
            Err(_) => q,
        };
        let t = q.t().dot(&g.dot(&q));
        let e = sym_eigen(t.view());
        let ritz = q.dot(&e.vectors);
        let top = Basis::from_orthonormal(ritz.slice(s![.., ..r]).to_owned());
        let converged = prev
            .as_ref()
            .map(|p| dist(p, &top).map(|d| d <= SUBSPACE_TOL).unwrap_or(false))
            .unwrap_or(false);
        if converged || iterations >= MAX_ITERATIONS {
            return TopEigen {
                vectors: top.into_inner(),
                values: e.values.slice(s![..r]).to_owned(),
                next_value: (r < block).then(|| e.values[r]),
                iterations,
            };
        }
        prev = Some(top);
        q = ritz;
    }
}

/// Top-`r` left singular vectors and singular values of `m`.
pub fn r_svd(m: ArrayView2<f64>, r: usize) -> Result<RSvd> {
    let (n, d) = m.dim();
    if r == 0 || r > n.min(d) {
        return Err(Error::InvalidRank { r, rows: n, cols: d });
    }
    let (w, sv, top) = if d <= n {
        let g = m.t().dot(&m);
        let top = top_eigenspace(g.view(), r);
        let w = m.dot(&top.vectors);
        let sv = column_norms(&w);
        (w, sv, top)
    } else {
        let g = m.dot(&m.t());
        let top = top_eigenspace(g.view(), r);
        let sv = column_norms(&m.t().dot(&top.vectors));
        (top.vectors.clone(), sv, top)
    };
    let s1 = sv.iter().cloned().fold(0.0, f64::max);
    let sr = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(s1 > 0.0) || sr < RANK_TOL * s1 {
        return Err(Error::RankDeficient {
            context: format!("sigma_r / sigma_1 = {:e}", sr / s1),
        });
    }
    let (q, _) = householder_qr(w.view()).map_err(|_| Error::RankDeficient {
        context: "top singular vectors are numerically dependent".into(),
    })?;
    let no_gap = match top.next_value {
        Some(next) => {
            let lr = top.values[r - 1];
            lr <= 0.0 || (next.max(0.0) / lr).sqrt() > 1.0 - 1e-10
        }
        None => false,
    };
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let singular_values = Array1::from_iter(order.iter().map(|&i| sv[i]));
    let mut cols = Array2::zeros((n, r));
    for (c, &i) in order.iter().enumerate() {
        cols.column_mut(c).assign(&q.column(i));
    }
    Ok(RSvd {
        basis: Basis::from_orthonormal(cols),
        singular_values,
        no_gap,
        iterations: top.iterations,
    })
}

fn column_norms(m: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(m.columns().into_iter().map(|c| c.dot(&c).sqrt()))
}
