use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subtrack::harness::{
    builtin, plot_emit, run_experiment, verify_with, write_atomic, ExperimentSpec, PlotStyle, RunOptions, Scenario,
    VerifySpec, BUILTIN_SPECS,
};
use subtrack::synth::{generate, write_dataset, DataConfig};
use subtrack::{Error, Result};

#[derive(Parser)]
#[command(name = "subtrack", version, about = "Streaming and federated subspace tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset of a spec for one seed and write it to a directory.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Centralized tracking (missing data, optionally with outliers).
    Track {
        #[command(flatten)]
        common: Common,
    },
    /// Standalone federated power-method runs.
    Fedpm {
        #[command(flatten)]
        common: Common,
    },
    /// The federated tracking pipeline.
    Fedtrack {
        #[command(flatten)]
        common: Common,
    },
    /// Run acceptance suites and report pass/fail per criterion.
    Verify {
        /// Suite name, or `all`.
        #[arg(default_value = "all")]
        suite: String,
        /// JSON verification spec (overrides the positional suite).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds for the seeded criteria.
        #[arg(long)]
        trials: Option<u64>,
        /// Stored dataset for the decay check.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory for `report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Render a series or aggregate CSV as an SVG line chart.
    Plot {
        /// Input CSV.
        input: PathBuf,
        /// Output SVG (default: the input with an .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "")]
        title: String,
        /// Linear instead of logarithmic y axis.
        #[arg(long)]
        linear: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in spec name or path to a JSON spec.
    #[arg(long)]
    config: String,
    /// Single seed, or the first seed when combined with --trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
    /// Write zero in wall-clock columns so repeated runs are byte-identical.
    #[arg(long)]
    zero_timing: bool,
}

fn load_spec(config: &str) -> Result<ExperimentSpec> {
    if BUILTIN_SPECS.contains(&config) {
        return builtin(config);
    }
    let path = Path::new(config);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{config:?} is neither a file nor a built-in spec ({})",
            BUILTIN_SPECS.join(", ")
        )));
    }
    ExperimentSpec::from_json(&fs::read_to_string(path)?)
}

fn apply_seeds(spec: &mut ExperimentSpec, common: &Common) {
    match (common.seed, common.trials) {
        (Some(s), Some(t)) => spec.seeds = (s..s + t).collect(),
        (Some(s), None) => spec.seeds = vec![s],
        (None, Some(t)) => spec.seeds = (0..t).collect(),
        (None, None) => {}
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Family {
    Track,
    Fedpm,
    Fedtrack,
}

fn family(s: &Scenario) -> Family {
    match s {
        Scenario::StmissRotation(_) | Scenario::StmissPiecewise(_) | Scenario::RstmissCentral(_) => Family::Track,
        Scenario::FedpmEta(_) | Scenario::FedpmRatio(_) | Scenario::PmInitCheck(_) => Family::Fedpm,
        Scenario::FedRotation(_) | Scenario::FedPiecewise(_) => Family::Fedtrack,
    }
}

fn data_config(s: &Scenario) -> Option<&DataConfig> {
    match s {
        Scenario::StmissRotation(p) | Scenario::StmissPiecewise(p) => Some(&p.data),
        Scenario::RstmissCentral(p) => Some(&p.data),
        Scenario::FedRotation(p) | Scenario::FedPiecewise(p) => Some(&p.data),
        _ => None,
    }
}

fn run(common: &Common, want: Family, command: &str) -> Result<()> {
    let mut spec = load_spec(&common.config)?;
    apply_seeds(&mut spec, common);
    if family(&spec.scenario) != want {
        return Err(Error::Config(format!(
            "spec {:?} ({}) cannot be run with `{command}`",
            spec.name,
            spec.scenario.name()
        )));
    }
    let opts = RunOptions { out_dir: common.out.clone(), zero_timing: common.zero_timing, quiet: common.quiet };
    let out = run_experiment(&spec, &opts)?;
    if out.files.is_empty() {
        print!("{}", out.aggregate.to_csv());
    } else if !common.quiet {
        for f in &out.files {
            println!("{}", f.display());
        }
    }
    Ok(())
}

fn gen(common: &Common) -> Result<()> {
    let spec = load_spec(&common.config)?;
    let data = data_config(&spec.scenario)
        .ok_or_else(|| Error::Config(format!("spec {:?} has no dataset", spec.name)))?;
    let seed = common.seed.or(spec.seeds.first().copied()).unwrap_or(0);
    let out = common
        .out
        .clone()
        .or(spec.out_dir.clone())
        .ok_or_else(|| Error::Config("gen needs --out".into()))?;
    let ds = generate(&DataConfig { seed, ..data.clone() })?;
    write_dataset(&out, &ds)?;
    if !common.quiet {
        println!("{}", out.display());
    }
    Ok(())
}

fn verify_cmd(
    suite: String,
    config: Option<PathBuf>,
    trials: Option<u64>,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    quiet: bool,
) -> Result<bool> {
    let mut spec = match config {
        Some(p) => serde_json::from_str::<VerifySpec>(&fs::read_to_string(p)?)?,
        None => VerifySpec { suite, ..Default::default() },
    };
    spec.trials = trials.or(spec.trials);
    spec.dataset = dataset.or(spec.dataset);
    let report = verify_with(&spec, |e| {
        if !quiet {
            println!("{}", e.line());
        }
    });
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("report.json"), &report.to_json())?;
    }
    Ok(report.all_passed())
}

fn plot(input: &Path, out: Option<PathBuf>, title: String, linear: bool) -> Result<()> {
    let csv = fs::read_to_string(input)?;
    let svg = plot_emit(&csv, &PlotStyle { title, log_y: !linear, ..PlotStyle::default() })?;
    let out = out.unwrap_or_else(|| input.with_extension("svg"));
    write_atomic(&out, &svg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { common } => gen(&common).map(|_| true),
        Command::Track { common } => run(&common, Family::Track, "track").map(|_| true),
        Command::Fedpm { common } => run(&common, Family::Fedpm, "fedpm").map(|_| true),
        Command::Fedtrack { common } => run(&common, Family::Fedtrack, "fedtrack").map(|_| true),
        Command::Verify { suite, config, trials, dataset, out, quiet } => {
            verify_cmd(suite, config, trials, dataset, out, quiet)
        }
        Command::Plot { input, out, title, linear } => plot(&input, out, title, linear).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
