use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::detect::detect_change;
use crate::error::{Error, Result};
use crate::linalg::{dist, lambda_max, projected_ls_fill, r_svd, Basis};
use crate::report::{fmt_f64, fmt_opt};
use crate::synth::ObservationBatch;

/// Where the detector's eigenvalue scale `lambda^+` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaSource {
    /// Known from the data model.
    Oracle { lambda_plus: f64 },
    /// Top eigenvalue of `L^ L^T / alpha` at the last update before detection.
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Subspace updates after (re)initialization before testing for changes.
    pub k_updates: usize,
    pub eps: f64,
    pub lambda: LambdaSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub alpha: usize,
    pub r: usize,
    /// `sqrt(lambda_v^+ / lambda^-)`, only used for bound evaluation.
    #[serde(default)]
    pub eps_nolev: f64,
    /// Recompute the fill with the new estimate after each update.
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub detection: Option<DetectionConfig>,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.alpha < self.r {
            return Err(Error::Config(format!("need 1 <= r <= alpha (r = {}, alpha = {})", self.r, self.alpha)));
        }
        if let Some(d) = &self.detection {
            if !(d.eps > 0.0 && d.eps < 1.0) || d.k_updates == 0 {
                return Err(Error::Config("detection needs 0 < eps < 1 and k_updates >= 1".into()));
            }
            if let LambdaSource::Oracle { lambda_plus } = d.lambda {
                if !(lambda_plus > 0.0) {
                    return Err(Error::Config("lambda_plus must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Update,
    Detect,
    Reinit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Update => "update",
            Phase::Detect => "detect",
            Phase::Reinit => "reinit",
        }
    }
}

/// One row of the per-run CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    /// 1-based batch number.
    pub j: usize,
    /// 1-based index of the batch's first column.
    pub t_start: usize,
    pub dist: Option<f64>,
    pub bound: Option<f64>,
    pub mean_recon_err: Option<f64>,
    pub refined_recon_err: Option<f64>,
    pub phase: Phase,
    pub detected: bool,
    pub statistic: Option<f64>,
    pub elapsed_ms: f64,
    /// Columns whose projected LS was ill-conditioned and fell back to zero fill.
    pub failed_columns: Vec<usize>,
}

pub const STMISS_CSV_HEADER: &str = "j,t_start,dist,bound,mean_recon_err,refined_recon_err,phase,detected,elapsed_ms";

impl BatchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.j,
            self.t_start,
            fmt_opt(self.dist),
            fmt_opt(self.bound),
            fmt_opt(self.mean_recon_err),
            fmt_opt(self.refined_recon_err),
            self.phase.as_str(),
            u8::from(self.detected),
            fmt_f64(self.elapsed_ms)
        )
    }
}

/// Ground truth for one batch, used only for evaluation.
#[derive(Clone, Copy, Debug)]
pub struct BatchTruth<'a> {
    pub basis: &'a Basis,
    /// The `n x alpha` noiseless signal `L~_j`.
    pub ltilde: ArrayView2<'a, f64>,
}

/// Filled batch returned by one tracking step.
#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub lhat: Array2<f64>,
    pub refined: Option<Array2<f64>>,
    pub failed_columns: Vec<usize>,
}

/// Projected-LS fill of every column with `phat`; columns whose restricted
/// system is ill-conditioned keep their zero-filled values and are reported.
pub fn fill_batch(phat: &Basis, batch: &ObservationBatch) -> Result<(Array2<f64>, Vec<usize>)> {
    if batch.n() != phat.n() {
        return Err(Error::dims(format!("n = {}", phat.n()), batch.n()));
    }
    let mut lhat = batch.y.clone();
    let mut failed = Vec::new();
    for c in 0..batch.alpha() {
        match projected_ls_fill(phat, batch.y.column(c), &batch.missing[c]) {
            Ok(l) => lhat.column_mut(c).assign(&l),
            Err(Error::IllConditioned { .. }) => failed.push(c),
            Err(e) => return Err(e),
        }
    }
    Ok((lhat, failed))
}

/// `P^_1 = r-SVD` of the zero-filled first batch.
pub fn init_first_batch(batch: &ObservationBatch, r: usize) -> Result<Basis> {
    if batch.alpha() < r {
        return Err(Error::InvalidRank { r, rows: batch.n(), cols: batch.alpha() });
    }
    Ok(r_svd(batch.y.view(), r)?.basis)
}

/// Per-batch r-SVD of the zero-filled observations.
pub fn simple_pca_baseline(batches: &[ObservationBatch], r: usize) -> Result<Vec<Basis>> {
    batches.iter().map(|b| init_first_batch(b, r)).collect()
}

/// Mean of `||l^_t - l~_t|| / ||l~_t||` over the batch.
pub fn mean_relative_error(lhat: ArrayView2<f64>, ltilde: ArrayView2<f64>) -> f64 {
    let cols = lhat.ncols();
    let mut total = 0.0;
    for c in 0..cols {
        let diff = &lhat.column(c) - &ltilde.column(c);
        let norm = ltilde.column(c).dot(&ltilde.column(c)).sqrt();
        let err = diff.dot(&diff).sqrt();
        total += if norm > 0.0 { err / norm } else { err };
    }
    total / cols as f64
}

/// State of a centralized tracker.
#[derive(Clone, Debug)]
pub struct TrackerState {
    pub config: TrackerConfig,
    pub current: Basis,
    /// Number of batches consumed so far (1 after initialization).
    pub j: usize,
    pub phase: Phase,
    pub updates_since_init: usize,
    reinit_pending: bool,
    prev_y: Option<Array2<f64>>,
    lambda_estimate: Option<f64>,
    pub history: Vec<BatchRecord>,
    /// Batch numbers (1-based) at which a change was declared.
    pub detections: Vec<usize>,
}

impl TrackerState {
    /// Initialize from the first batch and record it.
    pub fn new(config: TrackerConfig, first: &ObservationBatch, truth: Option<BatchTruth>) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let current = init_first_batch(first, config.r)?;
        let mut state = TrackerState {
            config,
            current,
            j: 1,
            phase: Phase::Update,
            updates_since_init: 0,
            reinit_pending: false,
            prev_y: Some(first.y.clone()),
            lambda_estimate: None,
            history: Vec::new(),
            detections: Vec::new(),
        };
        let mean = truth.map(|t| mean_relative_error(first.y.view(), t.ltilde));
        state.record(first, Phase::Init, truth, mean, None, false, None, start, Vec::new())?;
        Ok(state)
    }

    /// Start from a given estimate, which stands in for batch 1.
    pub fn with_estimate(config: TrackerConfig, estimate: Basis) -> Result<Self> {
        config.validate()?;
        Ok(TrackerState {
            config,
            current: estimate,
            j: 1,
            phase: Phase::Update,
            updates_since_init: 0,
            reinit_pending: false,
            prev_y: None,
            lambda_estimate: None,
            history: Vec::new(),
            detections: Vec::new(),
        })
    }

    /// One step of the no-detection tracker: fill with the current estimate,
    /// PCA on the filled batch, optional refined fill.
    pub fn track_minibatch(&mut self, batch: &ObservationBatch, truth: Option<BatchTruth>) -> Result<BatchOutput> {
        let start = Instant::now();
        let out = self.update(batch)?;
        self.finish_update(batch, &out, Phase::Update, truth, None, start)?;
        Ok(out)
    }

    /// One step of the two-phase tracker with change detection.
    pub fn track_with_detection(
        &mut self,
        batch: &ObservationBatch,
        truth: Option<BatchTruth>,
    ) -> Result<Option<BatchOutput>> {
        let det = self
            .config
            .detection
            .ok_or_else(|| Error::Config("tracker has no detection config".into()))?;
        let start = Instant::now();
        if self.reinit_pending {
            // r-SVD of the previous batch's raw observations
            let prev = self.prev_y.take().ok_or_else(|| Error::Config("no previous batch to re-initialize from".into()))?;
            self.current = r_svd(prev.view(), self.config.r)?.basis;
            self.reinit_pending = false;
            self.updates_since_init = 0;
            self.phase = Phase::Update;
            self.prev_y = Some(batch.y.clone());
            self.record(batch, Phase::Reinit, truth, None, None, false, None, start, Vec::new())?;
            return Ok(None);
        }
        let out = match self.phase {
            Phase::Detect => {
                let (lhat, failed) = fill_batch(&self.current, batch)?;
                let lambda = self.detection_lambda(&det)?;
                let decision = detect_change(&self.current, lhat.view(), det.eps, lambda)?;
                if decision.detected {
                    self.detections.push(self.j + 1);
                    self.reinit_pending = true;
                    self.prev_y = Some(batch.y.clone());
                    let mean = truth.map(|t| mean_relative_error(lhat.view(), t.ltilde));
                    self.record(batch, Phase::Detect, truth, mean, None, true, Some(decision.statistic), start, failed.clone())?;
                    return Ok(Some(BatchOutput { lhat, refined: None, failed_columns: failed }));
                }
                let out = self.update_from_fill(batch, lhat, failed)?;
                self.finish_update(batch, &out, Phase::Detect, truth, Some(decision.statistic), start)?;
                out
            }
            _ => {
                let out = self.update(batch)?;
                self.updates_since_init += 1;
                if self.updates_since_init >= det.k_updates {
                    if det.lambda == LambdaSource::Estimated {
                        let g = out.lhat.dot(&out.lhat.t()) / self.config.alpha as f64;
                        self.lambda_estimate = Some(lambda_max(g.view()));
                    }
                    self.phase = Phase::Detect;
                }
                self.finish_update(batch, &out, Phase::Update, truth, None, start)?;
                out
            }
        };
        self.prev_y = Some(batch.y.clone());
        Ok(Some(out))
    }

    fn detection_lambda(&self, det: &DetectionConfig) -> Result<f64> {
        match det.lambda {
            LambdaSource::Oracle { lambda_plus } => Ok(lambda_plus),
            LambdaSource::Estimated => self
                .lambda_estimate
                .ok_or_else(|| Error::Config("no converged batch to estimate lambda^+ from".into())),
        }
    }

    fn update(&mut self, batch: &ObservationBatch) -> Result<BatchOutput> {
        let (lhat, failed) = fill_batch(&self.current, batch)?;
        self.update_from_fill(batch, lhat, failed)
    }

    fn update_from_fill(&mut self, batch: &ObservationBatch, lhat: Array2<f64>, mut failed: Vec<usize>) -> Result<BatchOutput> {
        self.current = r_svd(lhat.view(), self.config.r)?.basis;
        let refined = if self.config.refine {
            let (l2, f2) = fill_batch(&self.current, batch)?;
            failed.extend(f2);
            failed.sort_unstable();
            failed.dedup();
            Some(l2)
        } else {
            None
        };
        Ok(BatchOutput { lhat, refined, failed_columns: failed })
    }

    fn finish_update(
        &mut self,
        batch: &ObservationBatch,
        out: &BatchOutput,
        phase: Phase,
        truth: Option<BatchTruth>,
        statistic: Option<f64>,
        start: Instant,
    ) -> Result<()> {
        let mean = truth.map(|t| mean_relative_error(out.lhat.view(), t.ltilde));
        let refined = match (truth, &out.refined) {
            (Some(t), Some(l2)) => Some(mean_relative_error(l2.view(), t.ltilde)),
            _ => None,
        };
        self.record(batch, phase, truth, mean, refined, false, statistic, start, out.failed_columns.clone())
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        batch: &ObservationBatch,
        phase: Phase,
        truth: Option<BatchTruth>,
        mean: Option<f64>,
        refined: Option<f64>,
        detected: bool,
        statistic: Option<f64>,
        start: Instant,
        failed_columns: Vec<usize>,
    ) -> Result<()> {
        if phase != Phase::Init {
            self.j += 1;
        }
        let d = match truth {
            Some(t) => Some(dist(&self.current, t.basis)?),
            None => None,
        };
        self.history.push(BatchRecord {
            j: self.j,
            t_start: batch.start + 1,
            dist: d,
            bound: None,
            mean_recon_err: mean,
            refined_recon_err: refined,
            phase,
            detected,
            statistic,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            failed_columns,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, ChangeModel, DataConfig, MaskMode};

    fn data(rho: f64, model: ChangeModel) -> crate::synth::Dataset {
        generate(&DataConfig {
            n: 60,
            d: 200,
            r: 3,
            alpha: 20,
            model,
            lambda_minus: 1.0,
            lambda_plus: 1.0,
            lambda_v: 0.0,
            r_v: 0,
            mask: MaskMode::Bernoulli { rho },
            outliers: None,
            seed: 3,
        })
        .unwrap()
    }

    fn cfg() -> TrackerConfig {
        TrackerConfig { alpha: 20, r: 3, eps_nolev: 0.0, refine: true, detection: None }
    }

    #[test]
    fn no_missing_entries_gives_clean_pca() {
        let ds = data(1.0, ChangeModel::Rotation { delta: 1e-3, generator: Default::default() });
        let mut st = TrackerState::new(cfg(), &ds.batches[0], None).unwrap();
        let out = st.track_minibatch(&ds.batches[1], None).unwrap();
        assert_eq!(out.lhat, ds.batches[1].y);
        let direct = r_svd(ds.batches[1].y.view(), 3).unwrap().basis;
        assert!(dist(&direct, &st.current).unwrap() < 1e-12);
    }

    #[test]
    fn exact_previous_estimate_gives_exact_pca() {
        let ds = data(0.8, ChangeModel::Piecewise { change_batches: vec![], min_spacing: 0 });
        let mut st = TrackerState::with_estimate(cfg(), ds.truth.subspaces[1].clone()).unwrap();
        let t = BatchTruth { basis: &ds.truth.subspaces[1], ltilde: ds.truth.batch(1) };
        st.track_minibatch(&ds.batches[1], Some(t)).unwrap();
        assert!(st.history[0].dist.unwrap() < 1e-10);
        assert!(st.history[0].mean_recon_err.unwrap() < 1e-10);
    }

    #[test]
    fn all_zero_first_batch_is_rank_deficient() {
        let mut ds = data(0.9, ChangeModel::Piecewise { change_batches: vec![], min_spacing: 0 });
        ds.batches[0].y.fill(0.0);
        assert!(matches!(init_first_batch(&ds.batches[0], 3), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn baseline_first_batch_equals_init() {
        let ds = data(0.9, ChangeModel::Piecewise { change_batches: vec![], min_spacing: 0 });
        let base = simple_pca_baseline(&ds.batches[..1], 3).unwrap();
        let init = init_first_batch(&ds.batches[0], 3).unwrap();
        assert_eq!(base[0], init);
    }

    #[test]
    fn tracker_converges_on_static_subspace() {
        let ds = data(0.9, ChangeModel::Piecewise { change_batches: vec![], min_spacing: 0 });
        let truth = |j: usize| BatchTruth { basis: &ds.truth.subspaces[j], ltilde: ds.truth.batch(j) };
        let mut st = TrackerState::new(cfg(), &ds.batches[0], Some(truth(0))).unwrap();
        for j in 1..ds.batches.len() {
            st.track_minibatch(&ds.batches[j], Some(truth(j))).unwrap();
        }
        let last = st.history.last().unwrap();
        assert!(last.dist.unwrap() < 1e-6, "{:?}", last);
        assert_eq!(st.history.len(), 10);
        assert_eq!(last.j, 10);
    }

    #[test]
    fn csv_row_has_header_arity() {
        let ds = data(0.9, ChangeModel::Piecewise { change_batches: vec![], min_spacing: 0 });
        let st = TrackerState::new(cfg(), &ds.batches[0], None).unwrap();
        let row = st.history[0].csv_row();
        assert_eq!(row.split(',').count(), STMISS_CSV_HEADER.split(',').count());
    }
}
