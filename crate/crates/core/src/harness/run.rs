use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use super::plot::{plot_emit, PlotStyle};
use super::spec::{eps_nolev, ExperimentSpec, FedParams, InitCheck, PmSweep, RobustParams, Scenario, TrackParams};
use super::table::{aggregate, Table};
use crate::error::{Error, Result};
use crate::fedcore::{
    fedoa_pm, partition_columns, random_init, random_init_quality_check, trace_csv, Channel, Descent, InitQuality,
    PartitionMode, PmAnalysis, PmConfig, PmIteration, RANDOM_INIT_C0,
};
use crate::fedrst::{fed_bound, perturb_basis, FedRecord, FedTrackerState, FED_CSV_HEADER};
use crate::linalg::{dist, qr_orthonormalize, r_svd, Basis};
use crate::report::fmt_f64;
use crate::rng;
use crate::sparse::{rst_csv_header, CsConfig, RstConfig, RstRecord, RstState};
use crate::stmiss::{
    piecewise_bound, simple_pca_baseline, theoretical_bound, BatchRecord, BatchTruth, DetectionConfig, TrackerConfig,
    TrackerState, STMISS_CSV_HEADER,
};
use crate::synth::{generate, ChangeModel, DataConfig, Dataset};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SUBTRACK_THREADS";

fn dataset(data: &DataConfig, seed: u64) -> Result<Dataset> {
    generate(&DataConfig { seed, ..data.clone() })
}

fn batch_truth(ds: &Dataset, j: usize) -> BatchTruth<'_> {
    BatchTruth { basis: &ds.truth.subspaces[j], ltilde: ds.truth.batch(j) }
}

/// Centralized tracker run with its baseline.
#[derive(Clone, Debug)]
pub struct TrackRun {
    /// One record per batch; `history[j - 1]` is batch `j`.
    pub history: Vec<BatchRecord>,
    /// Simple-PCA distance per batch.
    pub baseline_dist: Vec<f64>,
    /// Distance of the r-SVD of the refined fill, per batch.
    pub refined_dist: Vec<Option<f64>>,
    pub delta_tv: f64,
    pub eps_nolev: f64,
    pub detections: Vec<usize>,
    /// 1-based batches at which the true subspace changes.
    pub change_batches: Vec<usize>,
}

pub fn run_stmiss(p: &TrackParams, seed: u64) -> Result<TrackRun> {
    track_dataset(&dataset(&p.data, seed)?, p.refine, p.detection)
}

/// The centralized tracker and the simple-PCA baseline on a given dataset.
pub fn track_dataset(ds: &Dataset, refine: bool, detection: Option<DetectionConfig>) -> Result<TrackRun> {
    let data = &ds.config;
    let cfg = TrackerConfig { alpha: data.alpha, r: data.r, eps_nolev: eps_nolev(data), refine, detection };
    let mut st = TrackerState::new(cfg, &ds.batches[0], Some(batch_truth(ds, 0)))?;
    let mut refined_dist = vec![None];
    for j in 1..ds.batches.len() {
        let out = if detection.is_some() {
            st.track_with_detection(&ds.batches[j], Some(batch_truth(ds, j)))?
        } else {
            Some(st.track_minibatch(&ds.batches[j], Some(batch_truth(ds, j)))?)
        };
        let refined = match out.and_then(|o| o.refined) {
            Some(l2) => Some(dist(&r_svd(l2.view(), data.r)?.basis, &ds.truth.subspaces[j])?),
            None => None,
        };
        refined_dist.push(refined);
    }
    let baseline = simple_pca_baseline(&ds.batches, data.r)?;
    let baseline_dist = baseline
        .iter()
        .zip(&ds.truth.subspaces)
        .map(|(b, t)| dist(b, t))
        .collect::<Result<Vec<_>>>()?;
    let delta_tv = ds.truth.stats.delta_tv;
    let change_batches: Vec<usize> = ds.truth.change_batches.iter().map(|c| c + 1).collect();
    let mut history = st.history;
    for rec in &mut history {
        rec.bound = Some(match &data.model {
            ChangeModel::Rotation { .. } => theoretical_bound(rec.j, delta_tv, eps_nolev(data)),
            ChangeModel::Piecewise { .. } => {
                let last_change = change_batches.iter().copied().filter(|&c| c <= rec.j).max().unwrap_or(1);
                piecewise_bound(rec.j, last_change, eps_nolev(data).max(0.01))
            }
        });
    }
    Ok(TrackRun {
        history,
        baseline_dist,
        refined_dist,
        delta_tv,
        eps_nolev: eps_nolev(data),
        detections: st.detections,
        change_batches,
    })
}

/// Centralized robust run.
#[derive(Clone, Debug)]
pub struct RobustRun {
    pub init_dist: f64,
    /// Batches 2, 3, ...
    pub history: Vec<RstRecord>,
    pub delta_tv: f64,
    pub eps_nolev: f64,
    pub eps_init: f64,
}

pub fn run_rstmiss(p: &RobustParams, seed: u64) -> Result<RobustRun> {
    let ds = dataset(&p.data, seed)?;
    let cs = match (&p.cs, &p.data.outliers) {
        (Some(cs), _) => cs.clone(),
        (None, Some(o)) => CsConfig::oracle(o.s_min),
        (None, None) => return Err(Error::Config("no thresholds and no outlier model".into())),
    };
    let p1 = &ds.truth.subspaces[0];
    let estimate = perturb_basis(p1, p.eps_init, rng::derive_seed(seed, "oracle-init", 0))?;
    let init_dist = dist(&estimate, p1)?;
    let cfg = RstConfig { alpha: p.data.alpha, r: p.data.r, eps_nolev: eps_nolev(&p.data), refine: p.refine, cs };
    let mut st = RstState::new(cfg, estimate)?;
    for j in 1..ds.batches.len() {
        st.track_minibatch(&ds.batches[j], Some(batch_truth(&ds, j)))?;
    }
    let delta_tv = ds.truth.stats.delta_tv;
    let mut history = st.history;
    for rec in &mut history {
        rec.base.bound = Some(fed_bound(rec.base.j, p.eps_init, delta_tv, eps_nolev(&p.data)));
    }
    Ok(RobustRun { init_dist, history, delta_tv, eps_nolev: eps_nolev(&p.data), eps_init: p.eps_init })
}

/// Federated tracker run.
#[derive(Clone, Debug)]
pub struct FedRun {
    /// `history[t - 1]` is time step `t`.
    pub history: Vec<FedRecord>,
    /// Centralized tracker on the same data, per time step.
    pub central_dist: Option<Vec<f64>>,
    pub baseline_dist: Vec<f64>,
    /// `sqrt(n) sigma_c / sigma_r(L^ L^T)` per update step.
    pub noise_floor: Vec<Option<f64>>,
    pub delta_tv: f64,
    pub eps_nolev: f64,
    pub detections: Vec<usize>,
}

pub fn run_fed(p: &FedParams, seed: u64) -> Result<FedRun> {
    let ds = dataset(&p.data, seed)?;
    let cfg = p.fed_config(seed);
    let (n, r) = (p.data.n, p.data.r);
    let mut st = FedTrackerState::new(cfg, p.init, &ds.batches[0], Some(&ds.truth.subspaces[0]), Some(batch_truth(&ds, 0)))?;
    let start_basis = st.current.clone();
    let delta_tv = ds.truth.stats.delta_tv;
    if let crate::fedrst::InitMode::Oracle { eps_init } = p.init {
        st = st.with_bound(eps_init, delta_tv);
    }
    let mut noise_floor = vec![None];
    for j in 1..ds.batches.len() {
        let out = st.fed_track_step(&ds.batches[j], Some(batch_truth(&ds, j)))?;
        let floor = match out {
            Some(o) if p.sigma_c > 0.0 => {
                let s = r_svd(o.lhat.view(), r)?.singular_values[r - 1];
                Some((n as f64).sqrt() * p.sigma_c / (s * s))
            }
            _ => None,
        };
        noise_floor.push(floor);
    }
    let central_dist = if p.compare_central {
        let tc = TrackerConfig { alpha: p.data.alpha, r, eps_nolev: eps_nolev(&p.data), refine: false, detection: None };
        let mut c = TrackerState::with_estimate(tc, start_basis)?;
        let mut d = vec![st.history[0].dist.unwrap_or(f64::NAN)];
        for j in 1..ds.batches.len() {
            c.track_minibatch(&ds.batches[j], Some(batch_truth(&ds, j)))?;
            d.push(c.history.last().and_then(|h| h.dist).unwrap_or(f64::NAN));
        }
        Some(d)
    } else {
        None
    };
    let baseline_dist = simple_pca_baseline(&ds.batches, r)?
        .iter()
        .zip(&ds.truth.subspaces)
        .map(|(b, t)| dist(b, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(FedRun {
        history: st.history,
        central_dist,
        baseline_dist,
        noise_floor,
        delta_tv,
        eps_nolev: eps_nolev(&p.data),
        detections: st.detections,
    })
}

/// One power-method configuration on one seed.
#[derive(Clone, Debug)]
pub struct PmRunResult {
    pub label: String,
    pub eta: usize,
    pub ratio: f64,
    pub init_dist: f64,
    pub trace: Vec<PmIteration>,
    /// Distance after every iteration.
    pub dists: Vec<f64>,
    pub final_dist: f64,
    pub sigma1_hat: f64,
    /// Descent-bound comparison per normalization block.
    pub blocks_held: usize,
    pub blocks_checked: usize,
    pub blocks_infeasible: usize,
}

impl PmRunResult {
    /// First iteration with distance at most `target`.
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.dists.iter().position(|&d| d <= target).map(|i| i + 1)
    }
}

/// `Z = U diag(sqrt(lambda))` with a random orthogonal `U`; the truth is
/// `U`'s first `r` columns.
pub fn spiked_data(r: usize, lambda_top: f64, lambda_rest: f64, u: &Array2<f64>) -> (Array2<f64>, Basis) {
    let mut z = u.clone();
    for (c, mut col) in z.columns_mut().into_iter().enumerate() {
        col *= if c < r { lambda_top.sqrt() } else { lambda_rest.sqrt() };
    }
    let truth = Basis::new(u.slice(ndarray::s![.., ..r]).to_owned()).expect("columns of an orthogonal matrix");
    (z, truth)
}

pub fn run_pm_sweep(s: &PmSweep, seed: u64) -> Result<Vec<PmRunResult>> {
    let g = rng::gaussian_matrix(&mut rng::stream(seed, "pm-sweep-basis", 0), s.n, s.n);
    let u = qr_orthonormalize(g.view())?.0.into_inner();
    let init = random_init(s.n, s.r, rng::derive_seed(seed, "pm-sweep-init", 0))?;
    let topo = partition_columns(s.n, s.nodes, &PartitionMode::Even)?;
    s.runs
        .iter()
        .enumerate()
        .map(|(i, run)| {
            let (z, truth) = spiked_data(s.r, run.lambda_top, run.lambda_rest, &u);
            let shards: Vec<_> = topo.ranges.iter().map(|rg| z.slice(ndarray::s![.., rg.clone()])).collect();
            let mut channel = Channel::new(run.sigma_c, rng::derive_seed(seed, "pm-sweep-channel", i as u64))?;
            let cfg = PmConfig { eta: run.eta, ..PmConfig::new(s.r, s.iterations) };
            let res = fedoa_pm(&shards, &cfg, Some(&init), &mut channel, Some(&truth))?;
            let init_dist = dist(&init, &truth)?;
            let dists: Vec<f64> = res.trace.iter().map(|t| t.dist.unwrap_or(f64::NAN)).collect();
            let analysis = PmAnalysis::new(run.lambda_top, run.lambda_rest, run.sigma_c, run.eta);
            let (mut held, mut checked, mut infeasible) = (0, 0, 0);
            let mut prev = init_dist;
            for b in 1..=s.iterations / run.eta {
                let d = dists[b * run.eta - 1];
                match analysis.descent_bound(prev, s.n, s.r) {
                    Descent::Infeasible => infeasible += 1,
                    bound => {
                        checked += 1;
                        held += usize::from(bound.holds_for(d));
                    }
                }
                prev = d;
            }
            Ok(PmRunResult {
                label: run.label.clone(),
                eta: run.eta,
                ratio: run.lambda_rest / run.lambda_top,
                init_dist,
                final_dist: dist(&res.basis, &truth)?,
                sigma1_hat: res.sigma1_hat,
                trace: res.trace,
                dists,
                blocks_held: held,
                blocks_checked: checked,
                blocks_infeasible: infeasible,
            })
        })
        .collect()
}

pub fn run_init_check(c: &InitCheck, seed: u64) -> Result<InitQuality> {
    random_init_quality_check(c.n, c.r, c.gamma, c.trials, c.c0.unwrap_or(RANDOM_INIT_C0), seed)
}

/// Everything one seed produced.
#[derive(Clone, Debug)]
pub struct SeedOutput {
    pub seed: u64,
    /// The module-native per-step CSV.
    pub detail_csv: String,
    /// The series that are averaged across seeds.
    pub series: Table,
}

fn opt_vec(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| Some(*x)).collect()
}

/// Run one seed of a spec. With `zero_timing`, elapsed times are written as 0
/// so outputs are byte-for-byte reproducible.
pub fn run_seed(spec: &ExperimentSpec, seed: u64, zero_timing: bool) -> Result<SeedOutput> {
    let time = |ms: f64| if zero_timing { 0.0 } else { ms };
    let (detail_csv, series) = match &spec.scenario {
        Scenario::StmissRotation(p) | Scenario::StmissPiecewise(p) => {
            let run = run_stmiss(p, seed)?;
            let mut csv = format!("{STMISS_CSV_HEADER},simple_pca_dist\n");
            let mut table = Table::new("j", &["simple_pca", "tracker", "refined"]);
            for (i, rec) in run.history.iter().enumerate() {
                let rec = BatchRecord { elapsed_ms: time(rec.elapsed_ms), ..rec.clone() };
                csv.push_str(&format!("{},{}\n", rec.csv_row(), fmt_f64(run.baseline_dist[i])));
                table.push(rec.j as f64, vec![Some(run.baseline_dist[i]), rec.dist, run.refined_dist[i]]);
            }
            (csv, table)
        }
        Scenario::RstmissCentral(p) => {
            let run = run_rstmiss(p, seed)?;
            let mut csv = format!("{}\n", rst_csv_header());
            let mut table = Table::new("j", &["tracker", "bound", "support_recall"]);
            table.push(1.0, vec![Some(run.init_dist), Some(p.eps_init.max(run.eps_nolev)), None]);
            for rec in &run.history {
                let mut rec = rec.clone();
                rec.base.elapsed_ms = time(rec.base.elapsed_ms);
                csv.push_str(&rec.csv_row());
                csv.push('\n');
                table.push(rec.base.j as f64, vec![rec.base.dist, rec.base.bound, Some(rec.support_recall)]);
            }
            (csv, table)
        }
        Scenario::FedRotation(p) | Scenario::FedPiecewise(p) => {
            let run = run_fed(p, seed)?;
            let mut csv = format!("{FED_CSV_HEADER}\n");
            let mut table = Table::new("t", &["simple_pca", "fed_tracker", "central_tracker", "noise_floor"]);
            for (i, rec) in run.history.iter().enumerate() {
                let rec = FedRecord { elapsed_ms: time(rec.elapsed_ms), ..rec.clone() };
                csv.push_str(&rec.csv_row());
                csv.push('\n');
                let central = run.central_dist.as_ref().map(|c| c[i]);
                table.push(rec.t as f64, vec![Some(run.baseline_dist[i]), rec.dist, central, run.noise_floor[i]]);
            }
            (csv, table)
        }
        Scenario::FedpmEta(s) | Scenario::FedpmRatio(s) => {
            let runs = run_pm_sweep(s, seed)?;
            let mut csv = String::from("run,");
            csv.push_str(crate::fedcore::PM_CSV_HEADER);
            csv.push('\n');
            for run in &runs {
                for line in trace_csv(&run.trace).lines().skip(1) {
                    csv.push_str(&format!("{},{line}\n", run.label));
                }
            }
            let labels: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
            let mut table = Table::new("l", &labels);
            for l in 0..s.iterations {
                table.push((l + 1) as f64, runs.iter().map(|r| Some(r.dists[l])).collect());
            }
            (csv, table)
        }
        Scenario::PmInitCheck(c) => {
            let q = run_init_check(c, seed)?;
            let mut csv = String::from("trial,min_cos_sq,success\n");
            for (i, v) in q.min_cos_sq.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", i, fmt_f64(*v), u8::from(*v >= q.threshold)));
            }
            let mut table = Table::new("gamma", &["success_rate"]);
            table.push(c.gamma, opt_vec(&[q.success_rate]));
            (csv, table)
        }
    };
    Ok(SeedOutput { seed, detail_csv, series })
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the spec's output directory.
    pub out_dir: Option<PathBuf>,
    pub zero_timing: bool,
    pub quiet: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub seeds: Vec<SeedOutput>,
    pub aggregate: Table,
    pub files: Vec<PathBuf>,
}

/// Write through a temporary file and rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Worker count from `SUBTRACK_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Run every seed (in parallel), aggregate, and write
/// `<out>/<name>/seed_<s>.csv`, `seed_<s>_series.csv`, `aggregate.csv` and
/// optionally `plot.svg`. Nothing is written when no output directory is set.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let seeds: Vec<SeedOutput> = pool.install(|| {
        spec.seeds
            .par_iter()
            .map(|&s| {
                let out = run_seed(spec, s, opts.zero_timing);
                if !opts.quiet {
                    eprintln!("{}: seed {s} {}", spec.name, if out.is_ok() { "done" } else { "failed" });
                }
                out
            })
            .collect::<Result<_>>()
    })?;
    let tables: Vec<Table> = seeds.iter().map(|s| s.series.clone()).collect();
    let agg = aggregate(&tables)?;
    let mut files = Vec::new();
    if let Some(base) = opts.out_dir.clone().or_else(|| spec.out_dir.clone()) {
        let dir = base.join(&spec.name);
        fs::create_dir_all(&dir)?;
        for s in &seeds {
            let detail = dir.join(format!("seed_{}.csv", s.seed));
            write_atomic(&detail, &s.detail_csv)?;
            let series = dir.join(format!("seed_{}_series.csv", s.seed));
            write_atomic(&series, &s.series.to_csv())?;
            files.extend([detail, series]);
        }
        let agg_path = dir.join("aggregate.csv");
        write_atomic(&agg_path, &agg.to_csv())?;
        files.push(agg_path);
        write_atomic(&dir.join("spec.json"), &spec.to_json())?;
        files.push(dir.join("spec.json"));
        if spec.plot {
            let svg = plot_emit(&agg.to_csv(), &PlotStyle { title: spec.name.clone(), ..PlotStyle::default() })?;
            let plot = dir.join("plot.svg");
            write_atomic(&plot, &svg)?;
            files.push(plot);
        }
    }
    Ok(ExperimentOutput { seeds, aggregate: agg, files })
}
