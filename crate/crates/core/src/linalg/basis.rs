use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Maximum entry of `|B^T B - I|` accepted for a basis matrix.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// An `n x r` matrix with orthonormal columns, standing for its column span.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    cols: Array2<f64>,
}

impl Basis {
    /// Validate and wrap an `n x r` matrix.
    pub fn new(cols: Array2<f64>) -> Result<Self> {
        let (n, r) = cols.dim();
        if r == 0 || r > n {
            return Err(Error::InvalidRank { r, rows: n, cols: r });
        }
        let deviation = orthonormality_error(cols.view());
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Basis { cols })
    }

    /// Wrap a matrix whose orthonormality is guaranteed by construction.
    pub(crate) fn from_orthonormal(cols: Array2<f64>) -> Self {
        debug_assert!(orthonormality_error(cols.view()) <= 1e-8);
        Basis { cols }
    }

    /// `[e_{i_1}, ..., e_{i_r}]` in `R^n`.
    pub fn standard(n: usize, indices: &[usize]) -> Result<Self> {
        let mut cols = Array2::zeros((n, indices.len()));
        for (c, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::dims(format!("index < {n}"), i));
            }
            cols[[i, c]] = 1.0;
        }
        Basis::new(cols)
    }

    pub fn n(&self) -> usize {
        self.cols.nrows()
    }

    pub fn r(&self) -> usize {
        self.cols.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.cols.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.cols
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(self.cols.view())
    }

    /// `P^T x`.
    pub fn coords(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.cols.t().dot(&x)
    }

    /// `(I - P P^T) x`, in `O(nr)`.
    pub fn project_out(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let c = self.coords(x);
        &x - &self.cols.dot(&c)
    }

    /// `(I - P P^T) M`, column by column.
    pub fn project_out_mat(&self, m: ArrayView2<f64>) -> Array2<f64> {
        let c = self.cols.t().dot(&m);
        &m - &self.cols.dot(&c)
    }
}

pub(crate) fn orthonormality_error(m: ArrayView2<f64>) -> f64 {
    let g = m.t().dot(&m);
    let mut worst: f64 = 0.0;
    for ((i, j), v) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_orthonormal() {
        let m = array![[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(matches!(Basis::new(m), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn rejects_bad_rank() {
        assert!(Basis::new(Array2::zeros((3, 0))).is_err());
        assert!(Basis::new(Array2::eye(2).into_shape_with_order((1, 4)).unwrap()).is_err());
    }

    #[test]
    fn projection_kills_span() {
        let p = Basis::standard(3, &[0, 2]).unwrap();
        let x = array![1.0, 2.0, 3.0];
        assert_eq!(p.project_out(x.view()).to_vec(), vec![0.0, 2.0, 0.0]);
    }
}
