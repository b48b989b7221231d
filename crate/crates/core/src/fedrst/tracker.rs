use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::detect::fed_detect_change;
use super::fill::{concat_columns, fed_modcs_fill, split_batch, FillMode, NodeFill};
use super::init::{init_fed, InitMode};
use crate::error::{Error, Result};
use crate::fedcore::{fedoa_pm, partition_columns, Channel, FedTopology, PartitionMode, PmConfig};
use crate::linalg::{dist, Basis};
use crate::report::{fmt_f64, fmt_opt};
use crate::rng;
use crate::sparse::support_scores;
use crate::stmiss::{mean_relative_error, BatchTruth, LambdaSource, Phase};
use crate::synth::ObservationBatch;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedDetectionConfig {
    /// Subspace updates after (re)initialization before testing for changes.
    pub k_updates: usize,
    pub eps: f64,
    /// `Estimated` uses `sigma1_hat / alpha` from the latest power-method call.
    pub lambda: LambdaSource,
    /// Power iterations of each detection run.
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    /// Columns per time step, summed over nodes.
    pub alpha: usize,
    pub r: usize,
    pub nodes: usize,
    #[serde(default = "even")]
    pub partition: PartitionMode,
    pub sigma_c: f64,
    /// Power iterations per subspace update.
    pub iterations: usize,
    #[serde(default = "one")]
    pub eta: usize,
    pub fill: FillMode,
    #[serde(default)]
    pub refine: bool,
    /// `sqrt(lambda_v^+ / lambda^-)`, only used for the bound column.
    #[serde(default)]
    pub eps_nolev: f64,
    #[serde(default)]
    pub detection: Option<FedDetectionConfig>,
    /// Power iterations for re-initialization after a detected change;
    /// defaults to `iterations`.
    #[serde(default)]
    pub reinit_iterations: Option<usize>,
    /// Seed of the channel noise and of every random power-method start.
    #[serde(default)]
    pub seed: u64,
}

fn even() -> PartitionMode {
    PartitionMode::Even
}

fn one() -> usize {
    1
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.alpha < self.r {
            return Err(Error::Config(format!("need 1 <= r <= alpha (r = {}, alpha = {})", self.r, self.alpha)));
        }
        if self.iterations == 0 || self.eta == 0 {
            return Err(Error::Config("iterations and eta must be at least 1".into()));
        }
        if let Some(d) = &self.detection {
            if !(d.eps > 0.0 && d.eps < 1.0) || d.k_updates == 0 || d.iterations == 0 {
                return Err(Error::Config("detection needs 0 < eps < 1, k_updates >= 1, iterations >= 1".into()));
            }
        }
        self.fill.validate()?;
        partition_columns(self.alpha, self.nodes, &self.partition)?;
        Channel::new(self.sigma_c, 0).map(|_| ())
    }
}

/// `max(0.3^{t-1} eps_init + 0.5 delta_tv, eps_nolev)`.
pub fn fed_bound(t: usize, eps_init: f64, delta_tv: f64, eps_nolev: f64) -> f64 {
    assert!(t >= 1, "time index is 1-based");
    (0.3f64.powi(t as i32 - 1) * eps_init + 0.5 * delta_tv).max(eps_nolev)
}

/// One row of the per-time-step CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedRecord {
    /// 1-based time step (mini-batch) index.
    pub t: usize,
    pub dist: Option<f64>,
    pub bound: Option<f64>,
    pub sigma1_hat: Option<f64>,
    /// Channel uses during this step.
    pub transmissions: u64,
    pub detected: bool,
    pub statistic: Option<f64>,
    pub mean_recon_err: Option<f64>,
    pub refined_recon_err: Option<f64>,
    pub phase: Phase,
    pub support_precision: Option<f64>,
    pub support_recall: Option<f64>,
    /// `(node, local column)` pairs that kept their raw values.
    pub failed_columns: Vec<(usize, usize)>,
    pub elapsed_ms: f64,
}

pub const FED_CSV_HEADER: &str = "t,dist,bound,sigma1_hat,transmissions,detected,mean_recon_err,elapsed_ms";

impl FedRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            fmt_opt(self.dist),
            fmt_opt(self.bound),
            fmt_opt(self.sigma1_hat),
            self.transmissions,
            u8::from(self.detected),
            fmt_opt(self.mean_recon_err),
            fmt_f64(self.elapsed_ms)
        )
    }
}

/// Concatenated outputs of one step, for evaluation by the caller.
#[derive(Clone, Debug)]
pub struct FedOutput {
    pub lhat: Array2<f64>,
    pub refined: Option<Array2<f64>>,
    pub supports: Vec<Vec<usize>>,
}

/// Coordinator state of the federated tracker. The only thing the nodes
/// share is `current`, broadcast at the start of every step.
#[derive(Clone, Debug)]
pub struct FedTrackerState {
    pub config: FedConfig,
    pub topology: FedTopology,
    pub channel: Channel,
    pub current: Basis,
    /// Time steps consumed so far (1 after initialization).
    pub t: usize,
    pub phase: Phase,
    pub updates_since_init: usize,
    /// `(eps_init, delta_tv)` for the bound column.
    pub bound_params: Option<(f64, f64)>,
    pub history: Vec<FedRecord>,
    /// Time steps at which a change was declared.
    pub detections: Vec<usize>,
    reinit_pending: bool,
    prev_nodes: Option<Vec<ObservationBatch>>,
    lambda_estimate: Option<f64>,
}

impl FedTrackerState {
    /// Initialize from the first batch; `first_truth` is the true `P_1` (needed
    /// by oracle init) and `truth` the evaluation data for the first row.
    pub fn new(
        config: FedConfig,
        mode: InitMode,
        first: &ObservationBatch,
        first_truth: Option<&Basis>,
        truth: Option<BatchTruth>,
    ) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let topology = partition_columns(config.alpha, config.nodes, &config.partition)?;
        let mut channel = Channel::new(config.sigma_c, rng::derive_seed(config.seed, "channel", 0))?;
        let nodes = split_batch(first, &topology)?;
        let init = init_fed(mode, first_truth, &nodes, config.r, &mut channel, config.seed)?;
        let eps_init = match mode {
            InitMode::Oracle { eps_init } => Some(eps_init),
            InitMode::OutlierFreeFirstBatch { .. } => None,
        };
        let mut state = FedTrackerState {
            config,
            topology,
            channel,
            current: init.basis,
            t: 1,
            phase: Phase::Update,
            updates_since_init: 0,
            bound_params: None,
            history: Vec::new(),
            detections: Vec::new(),
            reinit_pending: false,
            prev_nodes: Some(nodes),
            lambda_estimate: init.sigma1_hat.map(|s| s / first.alpha() as f64),
        };
        state.bound_params = eps_init.map(|e| (e, 0.0));
        let record = FedRecord {
            t: 1,
            dist: truth.map(|t| dist(&state.current, t.basis)).transpose()?,
            bound: None,
            sigma1_hat: init.sigma1_hat,
            transmissions: init.transmissions,
            detected: false,
            statistic: None,
            mean_recon_err: truth.map(|t| mean_relative_error(first.y.view(), t.ltilde)),
            refined_recon_err: None,
            phase: Phase::Init,
            support_precision: None,
            support_recall: None,
            failed_columns: Vec::new(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        state.history.push(record);
        Ok(state)
    }

    /// Set `delta_tv` for the bound column (keeps the init's `eps_init`).
    pub fn with_bound(mut self, eps_init: f64, delta_tv: f64) -> Self {
        self.bound_params = Some((eps_init, delta_tv));
        for rec in &mut self.history {
            rec.bound = Some(fed_bound(rec.t, eps_init, delta_tv, self.config.eps_nolev));
        }
        self
    }

    fn pm_seed(&self, label: &str) -> u64 {
        rng::derive_seed(self.config.seed, label, self.t as u64 + 1)
    }

    fn update_from(&mut self, fills: &[NodeFill]) -> Result<(f64, u64)> {
        let shards: Vec<ArrayView2<f64>> = fills.iter().map(|f| f.lhat.view()).collect();
        let cfg = PmConfig {
            r: self.config.r,
            iterations: self.config.iterations,
            eta: self.config.eta,
            init_seed: self.pm_seed("fed-update"),
            keep_iterates: false,
        };
        let res = fedoa_pm(&shards, &cfg, Some(&self.current), &mut self.channel, None)?;
        self.current = res.basis;
        self.lambda_estimate = Some(res.sigma1_hat / self.config.alpha as f64);
        Ok((res.sigma1_hat, res.transmissions))
    }

    fn detection_lambda(&self, det: &FedDetectionConfig) -> Result<f64> {
        match det.lambda {
            LambdaSource::Oracle { lambda_plus } => Ok(lambda_plus),
            LambdaSource::Estimated => self
                .lambda_estimate
                .ok_or_else(|| Error::Config("no power-method run to estimate lambda^+ from".into())),
        }
    }

    /// One time step: node-local fill with the broadcast estimate, federated
    /// power method warm-started at that estimate, optional refined fill.
    /// With detection configured, the step may instead test for a change or
    /// re-initialize from the previous batch; `None` is returned on
    /// re-initialization steps.
    pub fn fed_track_step(&mut self, batch: &ObservationBatch, truth: Option<BatchTruth>) -> Result<Option<FedOutput>> {
        let start = Instant::now();
        let before = self.channel.transmissions();
        let nodes = split_batch(batch, &self.topology)?;
        let mut expected = 0u64;
        let mut row = FedRecord {
            t: self.t + 1,
            dist: None,
            bound: None,
            sigma1_hat: None,
            transmissions: 0,
            detected: false,
            statistic: None,
            mean_recon_err: None,
            refined_recon_err: None,
            phase: Phase::Update,
            support_precision: None,
            support_recall: None,
            failed_columns: Vec::new(),
            elapsed_ms: 0.0,
        };

        let output = if self.reinit_pending {
            let prev = self.prev_nodes.take().ok_or_else(|| Error::Config("no previous batch to re-initialize from".into()))?;
            let iterations = self.config.reinit_iterations.unwrap_or(self.config.iterations);
            let shards: Vec<ArrayView2<f64>> = prev.iter().map(|b| b.y.view()).collect();
            let cfg = PmConfig { init_seed: self.pm_seed("fed-reinit"), ..PmConfig::new(self.config.r, iterations) };
            let res = fedoa_pm(&shards, &cfg, None, &mut self.channel, None)?;
            expected += iterations as u64 + 1;
            self.current = res.basis;
            self.lambda_estimate = Some(res.sigma1_hat / self.config.alpha as f64);
            self.reinit_pending = false;
            self.updates_since_init = 0;
            self.phase = Phase::Update;
            row.phase = Phase::Reinit;
            row.sigma1_hat = Some(res.sigma1_hat);
            None
        } else {
            let fills = fed_modcs_fill(&self.current, &nodes, &self.config.fill)?;
            let views: Vec<ArrayView2<f64>> = fills.iter().map(|f| f.lhat.view()).collect();
            let lhat = concat_columns(&views);
            let supports: Vec<Vec<usize>> = fills.iter().flat_map(|f| f.supports.clone()).collect();
            row.failed_columns = fills
                .iter()
                .enumerate()
                .flat_map(|(k, f)| f.failed_columns.iter().map(move |&c| (k, c)))
                .collect();
            if let FillMode::ModCs { .. } = self.config.fill {
                let (p, r) = support_scores(&supports, &batch.outlier_support);
                row.support_precision = Some(p);
                row.support_recall = Some(r);
            }
            row.mean_recon_err = truth.map(|t| mean_relative_error(lhat.view(), t.ltilde));

            let mut skip_update = false;
            if let (Some(det), Phase::Detect) = (self.config.detection, self.phase) {
                let lambda = self.detection_lambda(&det)?;
                let seed = self.pm_seed("fed-detect");
                let d = fed_detect_change(&self.current, &views, &mut self.channel, det.iterations, det.eps, lambda, seed)?;
                expected += det.iterations as u64 + 1;
                row.statistic = Some(d.statistic);
                row.phase = Phase::Detect;
                if d.detected {
                    row.detected = true;
                    self.detections.push(self.t + 1);
                    self.reinit_pending = true;
                    skip_update = true;
                }
            }
            let mut refined = None;
            if !skip_update {
                let (sigma1, used) = self.update_from(&fills)?;
                expected += self.config.iterations as u64 + 1;
                debug_assert_eq!(used, self.config.iterations as u64 + 1);
                row.sigma1_hat = Some(sigma1);
                if self.config.refine {
                    let again = fed_modcs_fill(&self.current, &nodes, &self.config.fill)?;
                    let v2: Vec<ArrayView2<f64>> = again.iter().map(|f| f.lhat.view()).collect();
                    let l2 = concat_columns(&v2);
                    row.refined_recon_err = truth.map(|t| mean_relative_error(l2.view(), t.ltilde));
                    refined = Some(l2);
                }
                if let Some(det) = self.config.detection {
                    if self.phase == Phase::Update {
                        self.updates_since_init += 1;
                        if self.updates_since_init >= det.k_updates {
                            self.phase = Phase::Detect;
                        }
                    }
                }
            }
            Some(FedOutput { lhat, refined, supports })
        };

        let used = self.channel.transmissions() - before;
        assert_eq!(used, expected, "channel audit: {used} transmissions, expected {expected}");
        self.t += 1;
        self.prev_nodes = Some(nodes);
        row.transmissions = used;
        row.dist = truth.map(|t| dist(&self.current, t.basis)).transpose()?;
        if let (Some((eps_init, delta_tv)), Some(_)) = (self.bound_params, truth) {
            row.bound = Some(fed_bound(self.t, eps_init, delta_tv, self.config.eps_nolev));
        }
        row.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        self.history.push(row);
        Ok(output)
    }

    /// CSV of the history so far.
    pub fn csv(&self) -> String {
        let mut s = String::from(FED_CSV_HEADER);
        s.push('\n');
        for row in &self.history {
            s.push_str(&row.csv_row());
            s.push('\n');
        }
        s
    }
}
