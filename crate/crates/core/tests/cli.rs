//! End-to-end runs of the command-line binary.

use std::fs;
use std::process::{Command, Output};

use sparse_pr::bench::ResultTable;
use sparse_pr::operators::MeasurementOperator;
use sparse_pr::signal::{generate_sparse_signal, measurements_to_csv, RngSpec};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-pr"))
        .args(args)
        .env("SPARSE_PR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bench_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&[
        "bench", "--method", "l0l1pr", "--n", "32", "--s", "3", "--trials", "5", "--seed", "7",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.ends_with('\n'));
    let agg = fs::read_to_string(dir.path().join("r_aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 2);
    assert!(stdout(&o).starts_with("method,n,s,snr"));
}

#[test]
fn bench_is_deterministic_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.ini");
    fs::write(&cfg, "methods = l0l2pr, spr\nn = 24\ns = 2..4\ntrials = 2\nseed = 3\n[l0l2pr]\nmax_iters = 2000\n").unwrap();
    let mut texts = Vec::new();
    for (name, threads) in [("a.csv", "1"), ("b.csv", "2")] {
        let out = dir.path().join(name);
        let o = run(&[
            "bench", "--config", cfg.to_str().unwrap(), "--no-timing", "--threads", threads,
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        texts.push(fs::read_to_string(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let table = ResultTable::from_csv(&texts[0]).unwrap();
    assert_eq!(table.rows.len(), 2 * 3 * 2);
    assert_eq!(table.to_csv(), texts[0]);
}

#[test]
fn bench_json_and_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let figs = dir.path().join("figs");
    let o = run(&[
        "bench", "--method", "spr", "--n", "16", "--s", "2,3", "--trials", "2", "--format", "json",
        "--out", out.to_str().unwrap(), "--emit-figure-data", figs.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = ResultTable::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 4);
    for name in sparse_pr::bench::FIGURE_FILES {
        let text = fs::read_to_string(figs.join(name)).unwrap();
        assert_eq!(text.lines().count(), 3, "{name}");
    }
}

#[test]
fn config_errors_exit_two() {
    let o = run(&["bench", "--snr", "25", "--trials", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
    assert_eq!(run(&["bench", "--not-a-flag"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--operator", "cdp", "--method", "spr"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let o = run(&["bench", "--config", "/nonexistent/exp.ini"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_reports_nmse_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let gt = generate_sparse_signal(32, 3, RngSpec::new(1), true).unwrap();
    let sig = dir.path().join("x.csv");
    fs::write(&sig, gt.signal.to_csv()).unwrap();
    let est = dir.path().join("est.json");
    let diag = dir.path().join("diag.json");
    let figs = dir.path().join("figs");
    let o = run(&[
        "solve", "--signal", sig.to_str().unwrap(), "--method", "l0l2pr", "--no-noise",
        "--out", est.to_str().unwrap(), "--diagnostics", diag.to_str().unwrap(),
        "--emit-figure-data", figs.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("nmse="), "{text}");
    assert!(text.contains("iterations=23032"), "{text}");
    assert!(fs::read_to_string(&est).unwrap().starts_with("[["));
    let d: serde_json::Value = serde_json::from_str(&fs::read_to_string(&diag).unwrap()).unwrap();
    assert_eq!(d["iterations"], 23032);
    let trace = fs::read_to_string(figs.join("energy_trace.csv")).unwrap();
    assert!(trace.starts_with("method,iteration,energy\n"));
}

#[test]
fn solve_from_measurement_file_with_cdp_masks() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("m.csv");
    let o = run(&["masks", "--k", "2", "--n", "16", "--seed", "4", "--out", masks.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m = sparse_pr::operators::masks_from_csv(&fs::read_to_string(&masks).unwrap()).unwrap();
    let op = MeasurementOperator::cdp(m).unwrap();
    let gt = generate_sparse_signal(16, 2, RngSpec::new(2), true).unwrap();
    let b = dir.path().join("b.csv");
    fs::write(&b, measurements_to_csv(&op.magnitudes(&gt.signal).unwrap())).unwrap();
    let o = run(&[
        "solve", "--measurements", b.to_str().unwrap(), "--operator", "cdp", "--masks",
        masks.to_str().unwrap(), "--max-iters", "500",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("iterations=500"));
}

#[test]
fn solve_rejects_negative_noiseless_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b.csv");
    fs::write(&b, measurements_to_csv(&[1.0, -0.5, 2.0, 0.25])).unwrap();
    let o = run(&["solve", "--measurements", b.to_str().unwrap(), "--no-noise"]);
    assert_eq!(o.status.code(), Some(2));
    // without the assertion the same data is accepted as noisy input
    let o = run(&["solve", "--measurements", b.to_str().unwrap(), "--max-iters", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn masks_and_oracle_subcommands() {
    let o = run(&["masks", "--k", "1", "--n", "4", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("]]]"));
    let o = run(&["oracle", "--kernel", "l1", "--count", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<serde_json::Value> =
        stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["kernel"], "l1");
    assert_eq!(run(&["oracle", "--kernel", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["masks", "--k", "0", "--n", "4"]).status.code(), Some(2));
}
