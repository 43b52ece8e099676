use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellid::commands::FitRecord;
use cellid::harness::{build_report, RunRecord, Summary};
use cellid::optimizers::{make_bounds, sample_uniform, Method};
use cellid::params::{EstimandVector, N_ESTIMANDS};
use cellid::protocols::{read_trace, SuiteManifest, Termination, TraceRole};
use cellid::ConfigSet;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

fn cellid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellid"))
        .arg("--config")
        .arg(config_dir())
        .args(args)
        .env_remove("CELLID_CONFIG_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path) -> PathBuf {
    let suite = dir.join("suite");
    ok(&cellid(&["generate", "--out", s(&suite)]));
    suite
}

#[test]
fn simulate_half_c_ends_at_lower_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("half.csv");
    ok(&cellid(&["simulate", "--profile", "cc:0.5", "--out", s(&out)]));
    let trace = read_trace(&out).unwrap();
    assert_eq!(trace.termination, Termination::VMin);
    assert_eq!(trace.c_rate, Some(0.5));
}

#[test]
fn simulate_rejects_zero_rate_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero.csv");
    let res = cellid(&["simulate", "--profile", "cc:0", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("positive"));
    assert!(!out.exists());
}

#[test]
fn simulate_dst_is_bounded_by_the_template() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dst.csv");
    ok(&cellid(&["simulate", "--profile", "dst", "--out", s(&out)]));
    let set = ConfigSet::load(&config_dir()).unwrap();
    let max_rows = (360.0 / set.cell.protocol.dt_s) as usize * set.cell.protocol.dst_repetitions;
    let trace = read_trace(&out).unwrap();
    assert!(trace.len() <= max_rows);
    assert!(trace.len() > 0);
}

#[test]
fn generate_writes_eleven_traces_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path());
    let manifest: SuiteManifest =
        serde_json::from_str(&fs::read_to_string(suite.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.traces.len(), 11);
    assert_eq!(manifest.traces.iter().filter(|t| t.role == TraceRole::Fitting).count(), 1);
    let csvs: Vec<_> = fs::read_dir(&suite)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(csvs.len(), 11);

    let again = dir.path().join("again");
    ok(&cellid(&["generate", "--out", s(&again)]));
    for p in &csvs {
        let name = p.file_name().unwrap();
        assert_eq!(fs::read(p).unwrap(), fs::read(again.join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn bad_config_is_reported_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg");
    fs::create_dir(&cfg).unwrap();
    for f in ["cell.json", "optimizers.json", "dst_template.json"] {
        fs::copy(config_dir().join(f), cfg.join(f)).unwrap();
    }
    let text = fs::read_to_string(cfg.join("optimizers.json")).unwrap();
    fs::write(cfg.join("optimizers.json"), text.replace("\"swarm_size\": 40", "\"swarm_size\": 1")).unwrap();
    let out = dir.path().join("x.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_cellid"))
        .args(["simulate", "--profile", "cc:1", "--out", s(&out)])
        .env("CELLID_CONFIG_DIR", &cfg)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("pso.swarm_size"));
    assert!(!out.exists());

    // the same directory, intact, is picked up from the environment
    fs::copy(config_dir().join("optimizers.json"), cfg.join("optimizers.json")).unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_cellid"))
        .args(["simulate", "--profile", "cc:1", "--out", s(&out)])
        .env("CELLID_CONFIG_DIR", &cfg)
        .output()
        .unwrap();
    ok(&res);
    assert!(out.exists());
}

#[test]
fn missing_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_cellid"))
        .args(["--config", s(&dir.path().join("nope")), "generate", "--out", s(dir.path())])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));

    let out = dir.path().join("fit.json");
    let res = cellid(&["fit", "--method", "pso", "--suite", s(&dir.path().join("none")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    let res = cellid(&["fit", "--method", "nelder", "--suite", s(dir.path()), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

fn read_fit(path: &Path) -> FitRecord {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_pso_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        ok(&cellid(&["fit", "--method", "pso", "--seed", "1", "--suite", s(&suite), "--out", s(out)]));
    }
    let (mut ra, mut rb) = (read_fit(&a), read_fit(&b));
    assert_eq!(ra.seed, 1);
    assert!(ra.wall_time_s > 0.0);
    ra.wall_time_s = 0.0;
    rb.wall_time_s = 0.0;
    assert_eq!(ra, rb);
    let set = ConfigSet::load(&config_dir()).unwrap();
    let bounds = make_bounds(&set.cell.reference, 0.5, 1.5).unwrap();
    assert!(bounds.contains(&ra.best));
}

#[test]
fn fit_ls_defaults_to_first_sampled_start() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path());
    let out = dir.path().join("ls.json");
    ok(&cellid(&["fit", "--method", "ls", "--suite", s(&suite), "--out", s(&out)]));
    let rec = read_fit(&out);
    assert_eq!(rec.init_index, Some(0));
    let set = ConfigSet::load(&config_dir()).unwrap();
    assert_eq!(rec.seed, set.optimizers.bench.base_seed);

    // the explicit index reproduces the same run
    let out2 = dir.path().join("ls0.json");
    ok(&cellid(&["fit", "--method", "ls", "--init-index", "0", "--suite", s(&suite), "--out", s(&out2)]));
    assert_eq!(read_fit(&out2).best, rec.best);
    let bounds = make_bounds(&set.cell.reference, 0.5, 1.5).unwrap();
    let first = sample_uniform(&bounds, 100, rec.seed)[0];
    assert_ne!(first, rec.best, "least squares should have moved from its start");
}

#[test]
fn fit_ga_on_truth_data() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path());
    let out = dir.path().join("ga.json");
    ok(&cellid(&["fit", "--method", "ga", "--seed", "3", "--suite", s(&suite), "--out", s(&out)]));
    let rec = read_fit(&out);
    assert_eq!(rec.method, Method::Ga);
    assert!(rec.fitting_rmse_mv < 50.0, "{}", rec.fitting_rmse_mv);
}

fn parse_runs(path: &Path) -> Vec<RunRecord> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5 + N_ESTIMANDS);
            let num = |k: usize| f[k].parse::<f64>().unwrap();
            let best: Vec<f64> = (5..5 + N_ESTIMANDS).map(num).collect();
            RunRecord {
                run: f[0].parse().unwrap(),
                seed: f[1].parse().unwrap(),
                wall_time_s: num(2),
                fitting_rmse_mv: num(3),
                validation_rmse_mv: num(4),
                best: EstimandVector::from_slice(&best).unwrap(),
                converged_by: None,
                error: None,
            }
        })
        .collect()
}

#[test]
fn bench_pso_report_is_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path());
    let out = dir.path().join("bench");
    ok(&cellid(&["bench", "--method", "pso", "--reps", "5", "--seed", "11", "--suite", s(&suite), "--out", s(&out)]));

    let runs = parse_runs(&out.join("runs.csv"));
    assert_eq!(runs.len(), 5);
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![11, 12, 13, 14, 15]);

    let text = fs::read_to_string(out.join("summary.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["method"], "pso");
    assert_eq!(value["repetitions"], 5);
    for key in ["runtime_s", "fitting_rmse_mv", "validation_rmse_mv"] {
        assert!(value[key]["mean"].is_number() && value[key]["sd"].is_number(), "{key}");
    }
    assert!(value["runtime_s"]["min"].is_number() && value["runtime_s"]["max"].is_number());

    let summary: Summary = serde_json::from_value(value).unwrap();
    let rebuilt = build_report(Method::Pso, runs, 1.0).unwrap();
    assert_eq!(rebuilt.summary, summary);

    let hist = fs::read_to_string(out.join("hist_fitting.csv")).unwrap();
    assert!(hist.starts_with("lower_edge_mv,count\n"));
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 5);
}
