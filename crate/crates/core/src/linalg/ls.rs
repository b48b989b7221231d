//! Projected least-squares fill of missing (or outlier-flagged) entries.
//!
//! With `Psi = I - P P^T` and `B = P[T, :]`, the normal matrix of the restricted
//! problem is `Psi_T^T Psi_T = I - B B^T`, so the fill solves
//! `(I - B B^T) z = (Psi y)_T` and returns `y - I_T z`. The solve uses the
//! Woodbury identity `(I - B B^T)^{-1} = I + B (I - B^T B)^{-1} B^T`, which
//! needs only an `r x r` eigendecomposition.

use ndarray::{Array1, Array2, ArrayView1};

use super::{eigen::sym_eigen, Basis};
use crate::error::{Error, Result};

/// Condition-number ceiling of the restricted normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// One observed column: values with zeros on the missing set, plus the
/// (optional) known outlier support.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedVector {
    values: Array1<f64>,
    missing: Vec<usize>,
    outlier_support: Option<Vec<usize>>,
}

impl MaskedVector {
    /// Builds the vector, zeroing `values` on `missing`. Both index sets are
    /// sorted and deduplicated; they must be disjoint and in range.
    pub fn new(
        mut values: Array1<f64>,
        mut missing: Vec<usize>,
        outlier_support: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = values.len();
        missing.sort_unstable();
        missing.dedup();
        if let Some(&last) = missing.last() {
            if last >= n {
                return Err(Error::dims(format!("index < {n}"), last));
            }
        }
        for &i in &missing {
            values[i] = 0.0;
        }
        let outlier_support = match outlier_support {
            Some(mut t) => {
                t.sort_unstable();
                t.dedup();
                if let Some(&last) = t.last() {
                    if last >= n {
                        return Err(Error::dims(format!("index < {n}"), last));
                    }
                }
                if t.iter().any(|i| missing.binary_search(i).is_ok()) {
                    return Err(Error::InvalidParameter(
                        "outlier support intersects the missing set".into(),
                    ));
                }
                Some(t)
            }
            None => None,
        };
        Ok(MaskedVector { values, missing, outlier_support })
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn outlier_support(&self) -> Option<&[usize]> {
        self.outlier_support.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `l = y - I_M (Psi_M)^dagger Psi y` for the vector's missing set `M`.
pub fn masked_projected_ls(phat: &Basis, y: &MaskedVector) -> Result<Array1<f64>> {
    projected_ls_fill(phat, y.values(), y.missing())
}

/// Same fill over an arbitrary sorted support `t`; entries outside `t` are
/// returned unchanged.
pub fn projected_ls_fill(phat: &Basis, y: ArrayView1<f64>, t: &[usize]) -> Result<Array1<f64>> {
    let n = phat.n();
    if y.len() != n {
        return Err(Error::dims(format!("length {n}"), y.len()));
    }
    let mut out = y.to_owned();
    if t.is_empty() {
        return Ok(out);
    }
    if t.iter().any(|&i| i >= n) {
        return Err(Error::dims(format!("index < {n}"), t.iter().max().unwrap()));
    }
    let psi_y = phat.project_out(y);
    let g = Array1::from_iter(t.iter().map(|&i| psi_y[i]));
    let z = RestrictedSystem::new(phat, t)?.solve(g.view());
    for (a, &i) in t.iter().enumerate() {
        out[i] -= z[a];
    }
    Ok(out)
}

/// The restricted normal matrix `I - B B^T` with `B = P[T, :]`, factored
/// once through the eigendecomposition of `B^T B` so repeated solves cost
/// `O(|T| r)`.
pub(crate) struct RestrictedSystem {
    b: Array2<f64>,
    vectors: Array2<f64>,
    inv_gaps: Array1<f64>,
}

impl RestrictedSystem {
    /// Fails with `IllConditioned` when the condition number exceeds
    /// [`MAX_CONDITION`]. Indices must be in range.
    pub(crate) fn new(phat: &Basis, t: &[usize]) -> Result<Self> {
        let p = phat.view();
        let r = phat.r();
        let b = Array2::from_shape_fn((t.len(), r), |(a, c)| p[[t[a], c]]);
        let e = sym_eigen(b.t().dot(&b).view());
        // spectrum of I - B B^T: {1 - lambda_i(B^T B)} and, when |T| > r, also 1
        let lam_max = e.values[0];
        let lam_min = if t.len() > r { 0.0 } else { e.values[e.values.len() - 1].max(0.0) };
        let smallest = 1.0 - lam_max;
        let cond = if smallest <= 0.0 { f64::INFINITY } else { (1.0 - lam_min) / smallest };
        if !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned { cond });
        }
        let inv_gaps = e.values.mapv(|l| 1.0 / (1.0 - l));
        Ok(RestrictedSystem { b, vectors: e.vectors, inv_gaps })
    }

    /// `z = g + B V diag(1 / (1 - lambda)) V^T B^T g`.
    pub(crate) fn solve(&self, g: ArrayView1<f64>) -> Array1<f64> {
        let coeff = self.vectors.t().dot(&self.b.t().dot(&g)) * &self.inv_gaps;
        &g + &self.b.dot(&self.vectors.dot(&coeff))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn empty_missing_set_is_identity() {
        let p = Basis::standard(3, &[0]).unwrap();
        let y = MaskedVector::new(array![1.0, 2.0, 3.0], vec![], None).unwrap();
        assert_eq!(masked_projected_ls(&p, &y).unwrap(), array![1.0, 2.0, 3.0]);
    }

    #[test]
    fn exact_subspace_recovers_missing_entry() {
        let s = 1.0 / 3f64.sqrt();
        let p = Basis::new(array![[s], [s], [s]]).unwrap();
        let y = MaskedVector::new(array![2.0, 99.0, 2.0], vec![1], None).unwrap();
        assert_eq!(y.values()[1], 0.0);
        let l = masked_projected_ls(&p, &y).unwrap();
        assert!((&l - &array![2.0, 2.0, 2.0]).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn fully_coherent_support_is_ill_conditioned() {
        let p = Basis::standard(3, &[1]).unwrap();
        let y = MaskedVector::new(array![1.0, 0.0, 1.0], vec![1], None).unwrap();
        assert!(matches!(masked_projected_ls(&p, &y), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn overlapping_supports_rejected() {
        let r = MaskedVector::new(array![1.0, 2.0], vec![0], Some(vec![0]));
        assert!(r.is_err());
    }
}
