use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::modcs::{solve_modcs, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{projected_ls_fill, Basis};
use crate::synth::ObservationBatch;

/// How the residual level `xi` and the support threshold `omega_supp` are set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `xi = s_min / 15`, `omega_supp = s_min / 2` from the known minimum
    /// outlier magnitude.
    Oracle { s_min: f64 },
    Fixed { xi: f64, omega_supp: f64 },
    /// Per column: `xi = ||Psi y|| / 2` and `omega_supp = 3 ||Psi y|| / sqrt(n)`.
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsConfig {
    pub thresholds: ThresholdMode,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl CsConfig {
    pub fn oracle(s_min: f64) -> Self {
        CsConfig { thresholds: ThresholdMode::Oracle { s_min }, solver: SolverConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.thresholds {
            ThresholdMode::Oracle { s_min } => s_min > 0.0 && s_min.is_finite(),
            ThresholdMode::Fixed { xi, omega_supp } => xi > 0.0 && omega_supp > 0.0,
            ThresholdMode::Estimated => true,
        };
        if !ok {
            return Err(Error::Config("xi and omega_supp must be positive".into()));
        }
        self.solver.validate()
    }

    /// `(xi, omega_supp, estimated)` for a column with projected norm `psi_y_norm`.
    pub fn resolve(&self, psi_y_norm: f64, n: usize) -> (f64, f64, bool) {
        match self.thresholds {
            ThresholdMode::Oracle { s_min } => (s_min / 15.0, s_min / 2.0, false),
            ThresholdMode::Fixed { xi, omega_supp } => (xi, omega_supp, false),
            ThresholdMode::Estimated => (psi_y_norm / 2.0, 3.0 * psi_y_norm / (n as f64).sqrt(), true),
        }
    }
}

/// `M` together with every index whose magnitude strictly exceeds `omega_supp`.
pub fn threshold_support(x: ArrayView1<f64>, omega_supp: f64, known: &[usize]) -> Vec<usize> {
    let mut t: Vec<usize> = known.to_vec();
    t.extend(x.iter().enumerate().filter(|(_, v)| v.abs() > omega_supp).map(|(i, _)| i));
    t.sort_unstable();
    t.dedup();
    t
}

/// Projected least squares over the estimated support `t`.
pub fn ls_debias(phat: &Basis, y: ArrayView1<f64>, t: &[usize]) -> Result<Array1<f64>> {
    projected_ls_fill(phat, y, t)
}

/// Why a column kept its raw (zero-filled) values.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnFailure {
    Solver { residual: f64, xi: f64 },
    IllConditioned { cond: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnRecovery {
    pub lhat: Array1<f64>,
    /// Estimated outlier support, i.e. the thresholded support minus `M`.
    pub outliers: Vec<usize>,
    pub cs_iters: usize,
    pub estimated_thresholds: bool,
    pub failure: Option<ColumnFailure>,
}

/// Modified-CS, thresholding and LS debiasing for one column whose missing
/// entries (`missing`) are already zero in `y`.
pub fn recover_column(phat: &Basis, y: ArrayView1<f64>, missing: &[usize], cfg: &CsConfig) -> Result<ColumnRecovery> {
    let n = phat.n();
    if y.len() != n {
        return Err(Error::dims(format!("length {n}"), y.len()));
    }
    let y_tilde = phat.project_out(y);
    let norm = y_tilde.dot(&y_tilde).sqrt();
    let (xi, omega, estimated) = cfg.resolve(norm, n);
    let failed = |failure| ColumnRecovery {
        lhat: y.to_owned(),
        outliers: Vec::new(),
        cs_iters: 0,
        estimated_thresholds: estimated,
        failure: Some(failure),
    };
    let (x, cs_iters) = if norm <= xi {
        (Array1::zeros(n), 0)
    } else {
        match solve_modcs(phat, y_tilde.view(), missing, xi, &cfg.solver) {
            Ok(sol) => (sol.x, sol.iterations),
            Err(Error::SolverDidNotConverge { residual, xi, .. }) => {
                return Ok(failed(ColumnFailure::Solver { residual, xi }))
            }
            Err(e) => return Err(e),
        }
    };
    let mut known: Vec<usize> = missing.to_vec();
    known.sort_unstable();
    known.dedup();
    let support = threshold_support(x.view(), omega, &known);
    let outliers: Vec<usize> = support.iter().copied().filter(|i| known.binary_search(i).is_err()).collect();
    match ls_debias(phat, y, &support) {
        Ok(lhat) => Ok(ColumnRecovery { lhat, outliers, cs_iters, estimated_thresholds: estimated, failure: None }),
        Err(Error::IllConditioned { cond }) => {
            let mut out = failed(ColumnFailure::IllConditioned { cond });
            out.cs_iters = cs_iters;
            Ok(out)
        }
        Err(e) => Err(e),
    }
}

/// Recovered batch with per-column supports.
#[derive(Clone, Debug)]
pub struct RstFill {
    pub lhat: Array2<f64>,
    pub supports: Vec<Vec<usize>>,
    pub failed_columns: Vec<usize>,
    pub cs_iters: usize,
    pub estimated_thresholds: bool,
}

/// Run [`recover_column`] on every column of the batch, in parallel.
pub fn rst_fill_batch(phat: &Basis, batch: &ObservationBatch, cfg: &CsConfig) -> Result<RstFill> {
    if batch.n() != phat.n() {
        return Err(Error::dims(format!("n = {}", phat.n()), batch.n()));
    }
    let cols: Vec<ColumnRecovery> = (0..batch.alpha())
        .into_par_iter()
        .map(|c| recover_column(phat, batch.y.column(c), &batch.missing[c], cfg))
        .collect::<Result<_>>()?;
    let mut lhat = Array2::zeros(batch.y.dim());
    let mut fill = RstFill {
        lhat: Array2::zeros((0, 0)),
        supports: Vec::with_capacity(cols.len()),
        failed_columns: Vec::new(),
        cs_iters: 0,
        estimated_thresholds: false,
    };
    for (c, col) in cols.into_iter().enumerate() {
        lhat.column_mut(c).assign(&col.lhat);
        if col.failure.is_some() {
            fill.failed_columns.push(c);
        }
        fill.cs_iters += col.cs_iters;
        fill.estimated_thresholds |= col.estimated_thresholds;
        fill.supports.push(col.outliers);
    }
    fill.lhat = lhat;
    Ok(fill)
}

/// Mean per-column support precision and recall. An empty estimate has
/// precision 1 and an empty truth has recall 1.
pub fn support_scores(estimated: &[Vec<usize>], truth: &[Vec<usize>]) -> (f64, f64) {
    let cols = estimated.len().min(truth.len());
    if cols == 0 {
        return (1.0, 1.0);
    }
    let (mut precision, mut recall) = (0.0, 0.0);
    for (e, t) in estimated.iter().zip(truth) {
        let hits = e.iter().filter(|i| t.binary_search(i).is_ok()).count() as f64;
        precision += if e.is_empty() { 1.0 } else { hits / e.len() as f64 };
        recall += if t.is_empty() { 1.0 } else { hits / t.len() as f64 };
    }
    (precision / cols as f64, recall / cols as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense_psi;
    use crate::rng::{gaussian_matrix, stream};
    use crate::synth::random_basis;
    use ndarray::array;

    #[test]
    fn zero_estimate_keeps_known_support() {
        assert_eq!(threshold_support(Array1::zeros(5).view(), 0.1, &[3, 1]), vec![1, 3]);
    }

    #[test]
    fn threshold_is_strict() {
        let x = array![0.5, -0.5000001, 0.2];
        assert_eq!(threshold_support(x.view(), 0.5, &[]), vec![1]);
    }

    #[test]
    fn empty_support_debias_is_identity() {
        let p = random_basis(6, 2, &mut stream(0, "basis", 0)).unwrap();
        let y = array![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(ls_debias(&p, y.view(), &[]).unwrap(), y);
    }

    #[test]
    fn debias_matches_dense_closed_form() {
        // e = -I_T (Psi_T^T Psi_T)^{-1} I_T^T Psi (l + v) + v, with y = l + v + x on T
        let n = 25;
        let p = random_basis(n, 3, &mut stream(4, "basis", 0)).unwrap();
        let phat = random_basis(n, 3, &mut stream(4, "phat", 0)).unwrap();
        let mut rng = stream(4, "debias", 0);
        let l = p.view().dot(&gaussian_matrix(&mut rng, 3, 1).column(0));
        let v = gaussian_matrix(&mut rng, n, 1).column(0).to_owned() * 0.01;
        let t = vec![2usize, 7, 8, 19];
        let mut y = &l + &v;
        for &i in &t {
            y[i] += 10.0 + i as f64;
        }
        let lhat = ls_debias(&phat, y.view(), &t).unwrap();

        let psi = dense_psi(phat.view());
        let mut it = Array2::<f64>::zeros((n, t.len()));
        for (c, &i) in t.iter().enumerate() {
            it[[i, c]] = 1.0;
        }
        let psi_t = psi.dot(&it);
        let normal = psi_t.t().dot(&psi_t);
        let rhs = it.t().dot(&psi.dot(&(&l + &v)));
        let z = crate::oracle::dense_solve(normal.view(), rhs.view());
        let e = &v - &it.dot(&z);
        let got = &lhat - &l;
        assert!((&got - &e).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn exact_support_and_subspace_recover_signal() {
        let n = 20;
        let p = random_basis(n, 2, &mut stream(5, "basis", 0)).unwrap();
        let l = p.view().dot(&array![1.5, -2.0]);
        let mut y = l.clone();
        y[4] += 7.0;
        y[9] = 0.0;
        let out = ls_debias(&p, y.view(), &[4, 9]).unwrap();
        assert!((&out - &l).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn recovers_outliers_on_exact_subspace() {
        let n = 200;
        let p = random_basis(n, 3, &mut stream(6, "basis", 0)).unwrap();
        let l = p.view().dot(&array![2.0, -1.0, 0.5]);
        let mut y = l.clone();
        let missing = vec![3usize, 50];
        for &i in &missing {
            y[i] = 0.0;
        }
        y[10] += 8.0;
        y[120] -= 9.0;
        let rec = recover_column(&p, y.view(), &missing, &CsConfig::oracle(8.0)).unwrap();
        assert_eq!(rec.outliers, vec![10, 120]);
        assert!(rec.failure.is_none());
        assert!((&rec.lhat - &l).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn scores_count_hits() {
        let (p, r) = support_scores(&[vec![1, 2], vec![]], &[vec![2, 5], vec![]]);
        assert_eq!(p, 0.75);
        assert_eq!(r, 0.75);
    }
}
