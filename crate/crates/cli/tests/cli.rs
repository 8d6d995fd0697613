use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ifista_cli::config::sha256_hex;
use ifista_cli::trace::{self, COLUMNS};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ifista");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn ifista(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("IFISTA_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn file_hash(path: &Path) -> String {
    sha256_hex(&fs::read(path).unwrap())
}

const QUADRATIC: &str = r#"
[problem]
kind = "quadratic"
n = 4
center = [1.0, -2.0, 0.5, 3.0]
scales = [1.0, 0.5, 0.25, 0.125]

[solver]
mode = "deterministic"
gamma = 1.0
max_iters = 200
delta = { c = 0.01, p = 2.5 }
b = { c = 0.01, p = 2.5 }
"#;

fn run_quadratic(tmp: &TempDir, out: &str, extra: &[&str]) -> Output {
    let config = write(tmp, "q.toml", QUADRATIC);
    let out = tmp.path().join(out);
    let mut args = vec!["run", "--config", &config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ifista(&args)
}

#[test]
fn minimal_run_writes_one_row_per_iteration() {
    let tmp = TempDir::new().unwrap();
    let out = run_quadratic(&tmp, "a", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = tmp.path().join("a");
    let text = fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    let rows = trace::read(&dir.join("trace.csv")).unwrap();
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().enumerate().all(|(k, r)| r.k == k));
    let s = summary(&dir);
    assert_eq!(s["iterations"], 200);
    assert_eq!(s["max_bound_violation"], 0.0);
    assert_eq!(s["feasibility"]["feasible"], true);
    assert_eq!(s, serde_json::from_str::<Value>(&stdout(&out)).unwrap());
}

#[test]
fn same_config_and_seed_give_identical_traces() {
    let tmp = TempDir::new().unwrap();
    for name in ["a", "b", "c"] {
        let seed = if name == "c" { "8" } else { "7" };
        assert_eq!(code(&run_quadratic(&tmp, name, &["--seed", seed])), 0);
    }
    let hash = |d: &str| file_hash(&tmp.path().join(d).join("trace.csv"));
    assert_eq!(hash("a"), hash("b"));
    assert_ne!(hash("a"), hash("c"));
    let id = |d: &str| summary(&tmp.path().join(d))["run_id"].clone();
    assert_eq!(id("a"), id("b"));
    assert_ne!(id("a"), id("c"));
}

#[test]
fn saved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run_quadratic(&tmp, "a", &["--seed", "3"])), 0);
    let saved = tmp.path().join("a").join("config.json");
    let again = tmp.path().join("b");
    let out = ifista(&[
        "run",
        "--config",
        saved.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        file_hash(&tmp.path().join("a/trace.csv")),
        file_hash(&again.join("trace.csv"))
    );
    assert_eq!(summary(&tmp.path().join("a"))["run_id"], summary(&again)["run_id"]);
}

#[test]
fn seed_comes_from_the_environment_unless_given() {
    let tmp = TempDir::new().unwrap();
    let config = write(&tmp, "q.toml", QUADRATIC);
    let run = |out: &str, flag: Option<&str>| {
        let out = tmp.path().join(out);
        let mut cmd = Command::new(BIN);
        cmd.args(["run", "--config", &config, "--out", out.to_str().unwrap()]);
        if let Some(seed) = flag {
            cmd.args(["--seed", seed]);
        }
        let result = cmd.env("IFISTA_SEED", "41").output().unwrap();
        assert_eq!(code(&result), 0, "{}", stderr(&result));
        summary(&out)["seed"].as_u64().unwrap()
    };
    assert_eq!(run("env", None), 41);
    assert_eq!(run("flag", Some("5")), 5);
}

#[test]
fn step_size_above_one_over_l_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = write(&tmp, "q.toml", &QUADRATIC.replace("gamma = 1.0", "gamma = 1.5"));
    let out = ifista(&[
        "run",
        "--config",
        &config,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("step-size constraint"), "{}", stderr(&out));
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    for (from, to, field) in [
        ("max_iters = 200", "max_iters = -3", "max_iters"),
        ("kind = \"quadratic\"", "kind = \"cubic\"", "cubic"),
        ("gamma = 1.0", "gamma = 1.0\nstep = 2", "step"),
        ("scales = [1.0, 0.5, 0.25, 0.125]", "scales = [1.0]", "curvature"),
    ] {
        let config = write(&tmp, "bad.toml", &QUADRATIC.replace(from, to));
        let out = ifista(&[
            "run",
            "--config",
            &config,
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 1, "{to}");
        assert!(stderr(&out).contains(field), "{to}: {}", stderr(&out));
    }
}

#[test]
fn divergence_and_inner_cap_have_their_own_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let diverging = QUADRATIC.replace("b = { c = 0.01, p = 2.5 }", "b = { c = 1e9, p = 0.0 }");
    let config = write(&tmp, "div.toml", &diverging);
    let out = ifista(&[
        "run",
        "--config",
        &config,
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("divergence"));

    let capped = r#"
[problem]
kind = "tv1d"
m = 30
n = 40
seed = 3
lambda = 0.5
[solver]
mode = "deterministic"
gamma = 0.01
max_iters = 50
delta = { c = 1e-12, p = 0.0 }
inner_cap = 5
"#;
    let config = write(&tmp, "cap.toml", capped);
    let out = ifista(&[
        "run",
        "--config",
        &config,
        "--out",
        tmp.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&ifista(&["frobnicate"])), 1);
    assert_eq!(code(&ifista(&["run"])), 1);
    assert_eq!(code(&ifista(&["run", "--config", "/nonexistent/x.toml"])), 1);
    assert_eq!(code(&ifista(&["--help"])), 0);
}

fn exact_box_trace(tmp: &TempDir) -> PathBuf {
    let out = tmp.path().join("box");
    let config = configs().join("box_qp_exact.toml");
    let res = ifista(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--max-iters",
        "2000",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    out.join("trace.csv")
}

#[test]
fn exact_trace_passes_bound_verification() {
    let tmp = TempDir::new().unwrap();
    let trace_path = exact_box_trace(&tmp);
    let out = ifista(&["verify", "bounds", trace_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("1999 rows checked against the ReplayedDeterministic bound"));
}

#[test]
fn inflated_gap_fails_at_exactly_that_k() {
    let tmp = TempDir::new().unwrap();
    let trace_path = exact_box_trace(&tmp);
    let mut rows = trace::read(&trace_path).unwrap();
    // The row closest to its bound, so that a tenfold gap must cross it.
    let (k, ratio) = rows
        .iter()
        .filter_map(|r| Some((r.k, r.f_gap? / r.bound_rhs?)))
        .fold((0, 0.0), |best, c| if c.1 > best.1 { c } else { best });
    assert!(10.0 * ratio > 1.0, "ratio {ratio}");
    rows[k].f_gap = rows[k].f_gap.map(|g| 10.0 * g);
    let corrupted = tmp.path().join("corrupted.csv");
    trace::write(&corrupted, &rows).unwrap();

    let report_dir = tmp.path().join("report");
    let out = ifista(&[
        "verify",
        "bounds",
        corrupted.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(
        stderr(&out).contains(&format!("1 bound violations, first at k = {k} ")),
        "{}",
        stderr(&out)
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("verify_bounds.json")).unwrap()).unwrap();
    let violations = report["violations"].as_array().unwrap();
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0]["k"], k);
}

#[test]
fn trace_schema_deviations_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let trace_path = exact_box_trace(&tmp);
    let text = fs::read_to_string(&trace_path).unwrap();
    let drop_column = |name: &str| -> String {
        let idx = COLUMNS.iter().position(|c| *c == name).unwrap();
        text.lines()
            .map(|l| {
                let mut cells: Vec<&str> = l.split(',').collect();
                cells.remove(idx);
                cells.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    for name in ["bound_rhs", "F_gap", "k"] {
        let path = write(&tmp, "t.csv", &drop_column(name));
        let out = ifista(&["verify", "bounds", &path]);
        assert_eq!(code(&out), 1);
        assert!(
            stderr(&out).contains(&format!("missing column `{name}`")),
            "{}",
            stderr(&out)
        );
    }
    let extra = text.replacen("x_dist_to_ref", "x_dist_to_ref,note", 1);
    let path = write(&tmp, "t.csv", &extra);
    assert_eq!(code(&ifista(&["verify", "bounds", &path])), 1);
}

#[test]
fn stochastic_run_writes_replications_and_a_mean_trace() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let config = configs().join("stochastic_box.toml");
    let res = ifista(&[
        "--workers",
        "2",
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--max-iters",
        "300",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let reps = fs::read_dir(out.join("replications")).unwrap().count();
    assert_eq!(reps, 32);
    let mean = trace::read(&out.join("trace.csv")).unwrap();
    let rep0 = trace::read(&out.join("replications/rep_0000.csv")).unwrap();
    assert_eq!(mean.len(), 300);
    assert_eq!(rep0.len(), 300);
    assert_eq!(summary(&out)["mode"], "stochastic");
    let verify = ifista(&["verify", "bounds", out.join("trace.csv").to_str().unwrap()]);
    assert_eq!(code(&verify), 0, "{}", stderr(&verify));
    assert!(stdout(&verify).contains("Stored"));
}

fn sweep(config: &str, out: &Path) -> Output {
    ifista(&["sweep", "--config", config, "--out", out.to_str().unwrap()])
}

fn sweep_rows(out: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn sweep_header(out: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn alpha_sweep_slopes_reach_the_rate_regime() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep");
    let res = sweep(configs().join("sweep_alpha.toml").to_str().unwrap(), &out);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let header = sweep_header(&out);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let alpha: f64 = row[col("alpha")].parse().unwrap();
        let slope: f64 = row[col("fitted_slope")].parse().unwrap();
        assert_eq!(&row[col("status")], "ok");
        assert_eq!(&row[col("feasible")], "true");
        // Observed decay is at least the worst-case rate; at alpha = 1 it is the rate.
        assert!(slope <= -2.0 * alpha + 0.15, "alpha {alpha}: slope {slope}");
        if alpha == 1.0 {
            assert!((slope + 2.0).abs() <= 0.15, "slope {slope}");
        }
    }
}

#[test]
fn infeasible_exponent_is_recorded_and_still_run() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "[grid]\nalpha = [1.0]\np = [1.5, 2.5]\n\n{}",
        QUADRATIC
            .replace("[problem]", "[base.problem]")
            .replace("[solver]", "[base.solver]")
    );
    let config = write(&tmp, "sweep.toml", &text);
    let out = tmp.path().join("sw");
    let res = sweep(&config, &out);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let header = sweep_header(&out);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows = sweep_rows(&out);
    assert_eq!(&rows[0][col("p")], "1.5");
    assert_eq!(&rows[0][col("feasible")], "false");
    assert_eq!(&rows[0][col("status")], "ok");
    assert!(!rows[0][col("fitted_slope")].is_empty());
    assert_eq!(&rows[1][col("feasible")], "true");
    assert!(out.join("point_000/trace.csv").exists());
}

#[test]
fn failing_grid_points_do_not_stop_the_sweep() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "[grid]\nalpha = [0.5, 1.7]\n\n{}",
        QUADRATIC
            .replace("[problem]", "[base.problem]")
            .replace("[solver]", "[base.solver]")
    );
    let config = write(&tmp, "sweep.toml", &text);
    let out = tmp.path().join("sw");
    assert_eq!(code(&sweep(&config, &out)), 0);
    let header = sweep_header(&out);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows = sweep_rows(&out);
    assert_eq!(&rows[0][col("status")], "ok");
    assert_eq!(&rows[1][col("status")], "failed");
    assert_eq!(&rows[1][col("exit_code")], "1");
    assert!(rows[1][col("error")].contains("1.7"));
}

#[test]
fn empty_grid_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let base = QUADRATIC
        .replace("[problem]", "[base.problem]")
        .replace("[solver]", "[base.solver]");
    for grid in ["[grid]\nalpha = []\n", "[grid]\n"] {
        let config = write(&tmp, "sweep.toml", &format!("{grid}\n{base}"));
        let out = sweep(&config, &tmp.path().join("sw"));
        assert_eq!(code(&out), 1);
        assert!(stderr(&out).contains("empty"), "{}", stderr(&out));
    }
}

#[test]
fn lemma_suites_are_deterministic_for_a_seed() {
    let a = ifista(&["verify", "lemmas", "--seed", "12"]);
    let b = ifista(&["verify", "lemmas", "--seed", "12"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("PASS bihari_tight: 0/1000"));
    assert!(text.contains("PASS recurrence_two_constant: 0/1000"));
    assert!(text.contains("FAIL (documented) recurrence_ten_ninths"));
    assert_eq!(code(&ifista(&["verify", "lemmas", "--seed", "12", "--strict"])), 4);
}

#[test]
fn prox_certificate_battery_passes() {
    let out = ifista(&["verify", "prox-certs", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).matches("PASS").count(), 9);
}
