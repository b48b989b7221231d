//! End-to-end runs of the `subtrack` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use subtrack::harness::{builtin, run_experiment, ExperimentSpec, RunOptions, Scenario, Table};

fn subtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subtrack")).args(args).output().expect("binary runs")
}

/// A fig1a-shaped spec small enough for a test.
fn small_spec() -> ExperimentSpec {
    let mut spec = builtin("fig1a").unwrap();
    spec.name = "small".into();
    spec.seeds = vec![3, 4];
    if let Scenario::StmissRotation(p) = &mut spec.scenario {
        p.data.n = 80;
        p.data.d = 240;
        p.data.r = 3;
        p.data.alpha = 30;
    }
    spec
}

fn write_spec(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, small_spec().to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn track_runs_are_byte_identical_with_zero_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let res = subtrack(&["track", "--config", &spec, "--out", out.to_str().unwrap(), "--quiet", "--zero-timing"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let (fa, fb) = (read_all(&a.join("small")), read_all(&b.join("small")));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "aggregate.csv",
            "plot.svg",
            "seed_3.csv",
            "seed_3_series.csv",
            "seed_4.csv",
            "seed_4_series.csv",
            "spec.json"
        ]
    );
    assert_eq!(fa, fb);

    let agg = Table::from_csv(&fs::read_to_string(a.join("small/aggregate.csv")).unwrap()).unwrap();
    assert_eq!(agg.rows.len(), 8);
    assert_eq!(agg.series.len(), 9, "simple PCA, tracker and refined, each with mean/min/max");
    let svg = fs::read_to_string(a.join("small/plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn library_and_binary_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = write_spec(tmp.path());
    let res = subtrack(&["track", "--config", &spec_path, "--seed", "3", "--quiet"]);
    assert!(res.status.success());
    let mut spec = small_spec();
    spec.seeds = vec![3];
    let lib = run_experiment(&spec, &RunOptions { quiet: true, ..Default::default() }).unwrap();
    assert_eq!(String::from_utf8(res.stdout).unwrap(), lib.aggregate.to_csv());
}

#[test]
fn gen_writes_a_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let out = tmp.path().join("data");
    let res = subtrack(&["gen", "--config", &spec, "--seed", "9", "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let ds = subtrack::synth::read_dataset(&out).unwrap();
    assert_eq!(ds.config.seed, 9);
    assert_eq!(ds.batches.len(), 8);
}

#[test]
fn fedpm_runs_the_init_check() {
    let res = subtrack(&["fedpm", "--config", "init-check", "--quiet"]);
    assert!(res.status.success());
    let t = Table::from_csv(&String::from_utf8(res.stdout).unwrap()).unwrap();
    let rate = t.column("success_rate_mean").unwrap()[0].unwrap();
    assert!(rate >= 0.9, "{rate}");
}

#[test]
fn wrong_subcommand_for_a_spec_is_rejected() {
    let res = subtrack(&["fedtrack", "--config", "init-check"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("cannot be run"));
    let res = subtrack(&["track", "--config", "/no/such/spec.json"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn verify_reports_config_errors_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let res = subtrack(&["verify", "nonsense", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).contains("CONFIG-ERROR"));
    let report = fs::read_to_string(tmp.path().join("report.json")).unwrap();
    assert!(report.contains("\"config_error\""));

    let res = subtrack(&["verify", "thm32-decay", "--dataset", "/no/such/dataset"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).contains("ground truth"));

    let res = subtrack(&["verify", "linalg-oracles"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    assert!(String::from_utf8_lossy(&res.stdout).contains("PASS"));
}

#[test]
fn plot_renders_a_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("s.csv");
    fs::write(&csv, "j,dist\n1,0.5\n2,0.05\n3,0.005\n").unwrap();
    let res = subtrack(&["plot", csv.to_str().unwrap()]);
    assert!(res.status.success());
    let svg = fs::read_to_string(tmp.path().join("s.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);

    fs::write(&csv, "").unwrap();
    assert_eq!(subtrack(&["plot", csv.to_str().unwrap()]).status.code(), Some(2));
}
