use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::PartitionMode;
use crate::fedrst::{FedDetectionConfig, FillMode, InitMode};
use crate::sparse::CsConfig;
use crate::stmiss::{default_k_updates, DetectionConfig, LambdaSource};
use crate::synth::{ChangeModel, DataConfig, Generator, MaskMode, OutlierConfig};

pub const SPEC_SCHEMA_VERSION: u32 = 1;

/// Default number of seeds (trials) when a spec does not list them.
pub const DEFAULT_TRIALS: u64 = 20;

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_TRIALS).collect()
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn default_eps_init() -> f64 {
    0.1
}

/// A complete, versioned experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory; the CLI's `--out` overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Also write `plot.svg` from the aggregate.
    #[serde(default = "yes")]
    pub plot: bool,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    StmissRotation(TrackParams),
    StmissPiecewise(TrackParams),
    RstmissCentral(RobustParams),
    FedRotation(FedParams),
    FedPiecewise(FedParams),
    FedpmEta(PmSweep),
    FedpmRatio(PmSweep),
    PmInitCheck(InitCheck),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::StmissRotation(_) => "stmiss_rotation",
            Scenario::StmissPiecewise(_) => "stmiss_piecewise",
            Scenario::RstmissCentral(_) => "rstmiss_central",
            Scenario::FedRotation(_) => "fed_rotation",
            Scenario::FedPiecewise(_) => "fed_piecewise",
            Scenario::FedpmEta(_) => "fedpm_eta",
            Scenario::FedpmRatio(_) => "fedpm_ratio",
            Scenario::PmInitCheck(_) => "pm_init_check",
        }
    }
}

/// Centralized tracking from missing data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackParams {
    /// The `seed` field is replaced by each trial's seed.
    pub data: DataConfig,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub detection: Option<DetectionConfig>,
}

/// Centralized robust tracking started from a perturbed true subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustParams {
    pub data: DataConfig,
    #[serde(default = "default_eps_init")]
    pub eps_init: f64,
    /// Defaults to oracle thresholds from the outlier `s_min`.
    #[serde(default)]
    pub cs: Option<CsConfig>,
    #[serde(default)]
    pub refine: bool,
}

/// The federated tracker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedParams {
    pub data: DataConfig,
    pub nodes: usize,
    #[serde(default)]
    pub partition: Option<PartitionMode>,
    pub sigma_c: f64,
    /// Power iterations per update (`L`).
    pub iterations: usize,
    #[serde(default = "one")]
    pub eta: usize,
    pub init: InitMode,
    /// Defaults to projected LS without outliers and oracle modified-CS with them.
    #[serde(default)]
    pub fill: Option<FillMode>,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub detection: Option<FedDetectionConfig>,
    #[serde(default)]
    pub reinit_iterations: Option<usize>,
    /// Also run the centralized tracker on the same data for comparison.
    #[serde(default = "yes")]
    pub compare_central: bool,
}

/// One power-method configuration: `Z Z^T` has eigenvalue `lambda_top` on a
/// random `r`-dimensional subspace and `lambda_rest` on its complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmRun {
    pub label: String,
    #[serde(default = "one")]
    pub eta: usize,
    pub sigma_c: f64,
    pub lambda_top: f64,
    pub lambda_rest: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmSweep {
    pub n: usize,
    pub r: usize,
    #[serde(default = "one")]
    pub nodes: usize,
    pub iterations: usize,
    pub runs: Vec<PmRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitCheck {
    pub n: usize,
    pub r: usize,
    pub gamma: f64,
    pub trials: usize,
    /// Defaults to the calibrated constant.
    #[serde(default)]
    pub c0: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_model(data: &DataConfig, piecewise: bool) -> Result<()> {
    match (&data.model, piecewise) {
        (ChangeModel::Rotation { .. }, false) | (ChangeModel::Piecewise { .. }, true) => Ok(()),
        _ => Err(config_err(format!(
            "scenario needs a {} change model",
            if piecewise { "piecewise" } else { "rotation" }
        ))),
    }
}

impl ExperimentSpec {
    /// Parse and validate a JSON spec.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("specs always serialize")
    }

    /// Scenario-level consistency checks beyond the JSON schema.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "spec schema version {} (expected {SPEC_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err("name must be a non-empty file name"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("at least one seed is required"));
        }
        match &self.scenario {
            Scenario::StmissRotation(p) => check_model(&p.data, false),
            Scenario::StmissPiecewise(p) => check_model(&p.data, true),
            Scenario::RstmissCentral(p) => {
                if p.cs.is_none() && p.data.outliers.is_none() {
                    return Err(config_err("oracle thresholds need an outlier model (or give cs explicitly)"));
                }
                if !(0.0..1.0).contains(&p.eps_init) {
                    return Err(config_err("eps_init must lie in [0, 1)"));
                }
                Ok(())
            }
            Scenario::FedRotation(p) => check_model(&p.data, false).and_then(|_| p.fed_config(0).validate()),
            Scenario::FedPiecewise(p) => check_model(&p.data, true).and_then(|_| p.fed_config(0).validate()),
            Scenario::FedpmEta(s) | Scenario::FedpmRatio(s) => {
                if s.r == 0 || s.r >= s.n || s.nodes == 0 || s.nodes > s.n || s.iterations == 0 || s.runs.is_empty() {
                    return Err(config_err("need 0 < r < n, 1 <= nodes <= n, iterations >= 1, and at least one run"));
                }
                for run in &s.runs {
                    if run.eta == 0 || !(run.sigma_c >= 0.0) || !(run.lambda_top > run.lambda_rest && run.lambda_rest >= 0.0) {
                        return Err(config_err(format!("run {}: need eta >= 1, sigma_c >= 0, lambda_top > lambda_rest >= 0", run.label)));
                    }
                }
                Ok(())
            }
            Scenario::PmInitCheck(c) => {
                if c.r == 0 || c.r > c.n || c.trials == 0 || !(c.gamma > 0.0) {
                    return Err(config_err("need 0 < r <= n, trials >= 1, gamma > 0"));
                }
                Ok(())
            }
        }
    }
}

impl FedParams {
    /// The tracker configuration for one trial.
    pub fn fed_config(&self, seed: u64) -> crate::fedrst::FedConfig {
        let fill = self.fill.clone().unwrap_or_else(|| match &self.data.outliers {
            Some(o) => FillMode::ModCs { cs: CsConfig::oracle(o.s_min) },
            None => FillMode::ProjectedLs,
        });
        crate::fedrst::FedConfig {
            alpha: self.data.alpha,
            r: self.data.r,
            nodes: self.nodes,
            partition: self.partition.clone().unwrap_or(PartitionMode::Even),
            sigma_c: self.sigma_c,
            iterations: self.iterations,
            eta: self.eta,
            fill,
            refine: self.refine,
            eps_nolev: eps_nolev(&self.data),
            detection: self.detection,
            reinit_iterations: self.reinit_iterations,
            seed,
        }
    }
}

/// `sqrt(lambda_v / lambda^-)` of a data configuration.
pub fn eps_nolev(data: &DataConfig) -> f64 {
    (data.lambda_v / data.lambda_minus).sqrt()
}

fn rotation_data(n: usize, d: usize, r: usize, alpha: usize, rho: f64, delta: f64) -> DataConfig {
    DataConfig {
        n,
        d,
        r,
        alpha,
        model: ChangeModel::Rotation { delta, generator: Generator::Geodesic },
        lambda_minus: 1.0 / 12.0,
        lambda_plus: 1.0 / 12.0,
        lambda_v: 0.0,
        r_v: 0,
        mask: MaskMode::Bernoulli { rho },
        outliers: None,
        seed: 0,
    }
}

/// Change at column 1500 with batches of 60, i.e. 0-based batch 24.
fn piecewise_data() -> DataConfig {
    let eps: f64 = 0.01;
    let j_star = (eps.recip().ln() / (1.0f64 / 0.3).ln()).ceil() as usize;
    DataConfig {
        model: ChangeModel::Piecewise { change_batches: vec![24], min_spacing: j_star + 2 },
        ..rotation_data(1000, 3000, 30, 60, 0.9, 0.0)
    }
}

fn fig3_fed(data: DataConfig) -> FedParams {
    FedParams {
        data,
        nodes: 4,
        partition: None,
        // per-entry variance 1e-6
        sigma_c: 1e-3,
        iterations: 30,
        eta: 1,
        init: InitMode::OutlierFreeFirstBatch { iterations: 200 },
        fill: None,
        refine: false,
        detection: None,
        reinit_iterations: None,
        compare_central: true,
    }
}

fn pm_run(label: &str, eta: usize, sigma_c: f64, lambda_top: f64) -> PmRun {
    PmRun { label: label.into(), eta, sigma_c, lambda_top, lambda_rest: 1.0 }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_SPECS: &[&str] = &["fig1a", "fig1b", "fig3", "fig3b", "rst", "fig4a", "fig4b", "init-check"];

/// The experiments of the evaluation section as ready-made specs.
pub fn builtin(name: &str) -> Result<ExperimentSpec> {
    let scenario = match name {
        "fig1a" => Scenario::StmissRotation(TrackParams {
            data: rotation_data(1000, 3000, 30, 60, 0.9, 1e-4),
            refine: true,
            detection: None,
        }),
        "fig1b" => Scenario::StmissPiecewise(TrackParams { data: piecewise_data(), refine: true, detection: None }),
        "fig3" => Scenario::FedRotation(fig3_fed(rotation_data(1000, 3000, 30, 60, 0.9, 1e-4))),
        "fig3b" => Scenario::FedPiecewise(fig3_fed(piecewise_data())),
        "rst" => Scenario::RstmissCentral(RobustParams {
            data: DataConfig {
                outliers: Some(OutlierConfig {
                    col_frac: 0.01,
                    row_frac: 0.1,
                    s_min: 5.0,
                    s_max: 10.0,
                    first_batch_clean: false,
                }),
                ..rotation_data(1000, 1200, 30, 60, 0.99, 1e-4)
            },
            eps_init: 0.1,
            cs: None,
            refine: false,
        }),
        "fig4a" => Scenario::FedpmEta(PmSweep {
            n: 1000,
            r: 30,
            nodes: 1,
            iterations: 200,
            runs: vec![
                pm_run("eta1_sigma1e-4", 1, 1e-4, 1.1),
                pm_run("eta10_sigma1e-4", 10, 1e-4, 1.1),
                pm_run("eta1_sigma1e-8", 1, 1e-8, 1.1),
            ],
        }),
        "fig4b" => Scenario::FedpmRatio(PmSweep {
            n: 1000,
            r: 30,
            nodes: 1,
            iterations: 200,
            runs: vec![pm_run("R0.33", 1, 1e-8, 3.0), pm_run("R0.91", 1, 1e-8, 1.1)],
        }),
        "init-check" => Scenario::PmInitCheck(InitCheck { n: 50, r: 3, gamma: 10.0, trials: 1000, c0: None }),
        other => return Err(config_err(format!("unknown built-in spec {other:?}; known: {}", BUILTIN_SPECS.join(", ")))),
    };
    let seeds = match name {
        "fig4a" | "fig4b" => (0..10).collect(),
        "init-check" => vec![0],
        _ => default_seeds(),
    };
    Ok(ExperimentSpec { schema_version: SPEC_SCHEMA_VERSION, name: name.into(), seeds, out_dir: None, plot: true, scenario })
}

/// Detection settings used by the piecewise built-ins when detection is on.
pub fn default_detection(lambda_plus: f64) -> DetectionConfig {
    DetectionConfig { k_updates: default_k_updates(0.01), eps: 0.01, lambda: LambdaSource::Oracle { lambda_plus } }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in BUILTIN_SPECS {
            let spec = builtin(name).unwrap();
            spec.validate().unwrap();
            let back = ExperimentSpec::from_json(&spec.to_json()).unwrap();
            assert_eq!(back, spec, "{name}");
        }
    }

    #[test]
    fn fig1a_matches_the_published_setup() {
        let Scenario::StmissRotation(p) = builtin("fig1a").unwrap().scenario else { panic!() };
        assert_eq!((p.data.n, p.data.d, p.data.r, p.data.alpha), (1000, 3000, 30, 60));
        assert_eq!(p.data.mask, MaskMode::Bernoulli { rho: 0.9 });
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&builtin("fig1a").unwrap().to_json()).unwrap();
        v["scenario"]["bogus"] = 1.into();
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&builtin("fig1a").unwrap().to_json()).unwrap();
        v["schema_version"] = 7.into();
        assert!(matches!(ExperimentSpec::from_json(&v.to_string()), Err(Error::Schema(_))));
    }

    #[test]
    fn mismatched_model_is_a_config_error() {
        let mut spec = builtin("fig1a").unwrap();
        let Scenario::StmissRotation(p) = spec.scenario.clone() else { panic!() };
        spec.scenario = Scenario::StmissPiecewise(p);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
