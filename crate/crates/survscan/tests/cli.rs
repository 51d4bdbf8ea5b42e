use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use survscan::cli::read_document;
use survscan::report::{BenchBody, BootstrapBody, CvBody, FitBody, SimulateBody};

fn survscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survscan"))
        .args(args)
        .env_remove("SURVSCAN_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--n", "600", "--p", "12", "--seed", "7", "--out-dir", s(&out)];
    if !extra.contains(&"--density") {
        args.extend_from_slice(&["--density", "0.2"]);
    }
    args.extend_from_slice(extra);
    let o = survscan(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn fit_args<'a>(data: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "fit".into(),
        "--obs".into(),
        data.join("obs.csv").to_str().unwrap().into(),
        "--matrix".into(),
        data.join("matrix.csv").to_str().unwrap().into(),
        "--out".into(),
        out.to_str().unwrap().into(),
    ];
    v.extend(extra.iter().map(|x| x.to_string()));
    v
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    survscan(&refs)
}

/// Serialized `result` body.
fn body(path: &Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["result"].to_string()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", &[]);
    let b = simulate(dir.path(), "b", &[]);
    for f in ["obs.csv", "matrix.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert_eq!(body(&a.join("truth.json")), body(&b.join("truth.json")));
    let doc = read_document::<SimulateBody>(&a.join("truth.json")).unwrap();
    assert_eq!(doc.result.true_beta.len(), 12);
    assert_eq!(doc.manifest.dataset.unwrap().rows, 600);
}

#[test]
fn simulate_finegray_has_all_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(dir.path(), "fg", &["--model", "finegray", "--censoring-quantile", "0.8"]);
    let text = std::fs::read_to_string(d.join("obs.csv")).unwrap();
    let mut seen = [false; 3];
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let status: usize = line.rsplit(',').next().unwrap().parse().unwrap();
        seen[status] = true;
    }
    assert_eq!(seen, [true, true, true]);
}

#[test]
fn zero_density_gives_no_triplets() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(dir.path(), "z", &["--density", "0"]);
    let text = std::fs::read_to_string(d.join("matrix.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 0);
}

#[test]
fn fit_results_are_reproducible_and_shrink() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &["--censoring-quantile", "0.9"]);
    let (r1, r2, r3) = (dir.path().join("r1.json"), dir.path().join("r2.json"), dir.path().join("r3.json"));
    let extra = ["--penalty", "l1", "--strength", "2", "--threads", "2"];
    assert_eq!(code(&run_owned(&fit_args(&data, &r1, &extra))), 0);
    assert_eq!(code(&run_owned(&fit_args(&data, &r2, &extra))), 0);
    assert_eq!(body(&r1), body(&r2));

    let big = ["--penalty", "l1", "--strength", "1e12", "--exempt", "3"];
    assert_eq!(code(&run_owned(&fit_args(&data, &r3, &big))), 0);
    let doc = read_document::<FitBody>(&r3).unwrap();
    assert_eq!(doc.result.beta.indices, vec![3]);
    assert_eq!(doc.result.nonzero_count, 1);
    assert_eq!(doc.manifest.config["model"]["threads"], serde_json::json!(available()));
    assert!(doc.manifest.timings["grad_hess"] <= doc.manifest.timings["fit"]);
}

fn available() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[test]
fn finegray_without_competing_events_matches_cox() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &["--censoring-quantile", "0.7"]);
    let (cox, fg) = (dir.path().join("cox.json"), dir.path().join("fg.json"));
    assert_eq!(code(&run_owned(&fit_args(&data, &cox, &[]))), 0);
    assert_eq!(code(&run_owned(&fit_args(&data, &fg, &["--model", "finegray"]))), 0);
    let a = read_document::<FitBody>(&cox).unwrap().result.beta.to_dense();
    let b = read_document::<FitBody>(&fg).unwrap().result.beta.to_dense();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn threads_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &[]);
    let out = dir.path().join("r.json");
    let args = fit_args(&data, &out, &[]);
    let o = Command::new(env!("CARGO_BIN_EXE_survscan"))
        .args(&args)
        .env("SURVSCAN_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let doc = read_document::<FitBody>(&out).unwrap();
    assert_eq!(doc.manifest.config["model"]["threads"], serde_json::json!(3));
}

#[test]
fn not_converged_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &[]);
    let out = dir.path().join("r.json");
    let o = run_owned(&fit_args(&data, &out, &["--max-cycles", "1", "--tol", "1e-15"]));
    assert_eq!(code(&o), 2);
    assert!(!read_document::<FitBody>(&out).unwrap().result.converged);
}

#[test]
fn cv_single_value_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &["--censoring-quantile", "0.9"]);
    let obs = data.join("obs.csv");
    let matrix = data.join("matrix.csv");
    let cv = |out: &Path, grid: &str, workers: &str| {
        survscan(&[
            "cv", "--obs", s(&obs), "--matrix", s(&matrix), "--penalty", "l1", "--folds", "3", "--reps", "2",
            "--grid", grid, "--seed", "11", "--replicate-workers", workers, "--out", s(out),
        ])
    };
    let one = dir.path().join("one.json");
    assert_eq!(code(&cv(&one, "4.5", "1")), 0);
    assert_eq!(read_document::<CvBody>(&one).unwrap().result.selected_value, 4.5);

    let (w1, w8) = (dir.path().join("w1.json"), dir.path().join("w8.json"));
    assert_eq!(code(&cv(&w1, "auto", "1")), 0);
    assert_eq!(code(&cv(&w8, "auto", "8")), 0);
    assert_eq!(body(&w1), body(&w8));

    // The top of the automatic grid zeroes every coefficient.
    let top = read_document::<CvBody>(&w1).unwrap().result.curve.last().unwrap().value;
    let fit_out = dir.path().join("top.json");
    let strength = top.to_string();
    let o = run_owned(&fit_args(&data, &fit_out, &["--penalty", "l1", "--strength", &strength]));
    assert_eq!(code(&o), 0);
    assert_eq!(read_document::<FitBody>(&fit_out).unwrap().result.nonzero_count, 0);
}

#[test]
fn bootstrap_reports_an_interval() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &["--beta-sparsity", "0"]);
    let out = dir.path().join("b.json");
    let o = survscan(&[
        "bootstrap", "--obs", s(&data.join("obs.csv")), "--matrix", s(&data.join("matrix.csv")), "--coef", "0",
        "--resamples", "100", "--replicate-workers", "2", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = read_document::<BootstrapBody>(&out).unwrap().result;
    assert!(b.lower <= b.estimate && b.estimate <= b.upper);
}

#[test]
fn bench_emits_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let o = survscan(&[
        "bench", "--sizes", "2000", "--p", "20", "--threads", "1", "--reps", "3", "--max-cycles", "2", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = read_document::<BenchBody>(&out).unwrap().result;
    assert_eq!(b.rows.len(), 3);
    assert_eq!(b.summary.len(), 1);
    assert!(b.rows.iter().all(|r| r.grad_hess_seconds <= r.total_seconds));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("median_total"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,status,x\n1,3,0\n").unwrap();
    assert_eq!(code(&survscan(&["fit", "--data", s(&bad)])), 65);
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&survscan(&["fit", "--data", s(&missing)])), 65);
    assert_eq!(code(&survscan(&["fit", "--nonsense"])), 64);

    let good = dir.path().join("good.csv");
    std::fs::write(&good, "time,status,x\n1,1,0\n2,1,1\n3,0,1\n").unwrap();
    assert_eq!(code(&survscan(&["fit", "--data", s(&good), "--penalty", "l1"])), 64);
    assert_eq!(code(&survscan(&["fit", "--data", s(&good), "--tol", "-1"])), 64);

    let competing = dir.path().join("competing.csv");
    std::fs::write(&competing, "time,status,x\n1,1,0\n2,2,1\n3,0,1\n").unwrap();
    assert_eq!(code(&survscan(&["fit", "--data", s(&competing)])), 65);
    let out = dir.path().join("fg.json");
    assert_eq!(
        code(&survscan(&["fit", "--data", s(&competing), "--model", "finegray", "--out", s(&out)])),
        0
    );
}
