use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn briot(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_briot"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<[f64; 5]> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3], v[4]]
        })
        .collect()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

/// u₀ = −xt/2 − t²/4, plus (x − t)t³ + t⁶/3 for ψ(x) = x.
fn closed_form(t: f64, xr: f64, xi: f64, member: bool) -> (f64, f64) {
    let (mut re, mut im) = (-xr * t / 2.0 - t * t / 4.0, -xi * t / 2.0);
    if member {
        re += (xr - t) * t.powi(3) + t.powi(6) / 3.0;
        im += xi * t.powi(3);
    }
    (re, im)
}

fn max_err(rows: &[[f64; 5]], member: bool) -> f64 {
    rows.iter()
        .map(|r| {
            let (re, im) = closed_form(r[0], r[1], r[2], member);
            ((r[3] - re).powi(2) + (r[4] - im).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

#[test]
fn solve_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("quadratic_gradient.toml");
    let o = briot(&["solve", p.to_str().unwrap(), "--grid", "16x16", "--tmin", "1e-3", "--tmax", "0.2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("solve-0.csv"));
    assert_eq!(r.len(), 2 * 256, "two default radii, 16 × 16 rows each");
    assert!(max_err(&r, false) <= 1e-6);
    assert_eq!(report(dir.path())["tasks"][0]["passed"], Value::Bool(true));
}

#[test]
fn one_radius_gives_nt_times_nx_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("quadratic_gradient.toml");
    let o = briot(&["solve", p.to_str().unwrap(), "--grid", "16x16", "--radii", "0.15"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(rows(&dir.path().join("solve-0.csv")).len(), 256);
}

#[test]
fn output_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let p = problem("quadratic_gradient.toml");
    for d in [&a, &b] {
        assert_eq!(briot(&["solve", p.to_str().unwrap()], d.path()).status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("solve-0.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn violated_assumption_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("bad_source.toml");
    let o = briot(&["solve", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("A2"));
}

#[test]
fn family_member_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("quadratic_gradient.toml");
    let o = briot(&["family", p.to_str().unwrap(), "--psi", "0,1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(max_err(&rows(&dir.path().join("family-1.csv")), true) <= 1e-6);
    let rep = report(dir.path());
    assert!(rep["tasks"][0]["psi_round_trip_error"].as_f64().unwrap() < 1e-4);
    let limit = rows_pairs(&dir.path().join("family-1-limit.csv"));
    assert!(!limit.is_empty());
}

fn rows_pairs(path: &Path) -> Vec<(f64, f64)> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    rd.records().map(|r| r.unwrap()).map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect()
}

#[test]
fn zero_psi_reproduces_solve_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("quadratic_gradient.toml");
    assert_eq!(briot(&["solve", p.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let solve = std::fs::read(dir.path().join("solve-0.csv")).unwrap();
    assert_eq!(briot(&["family", p.to_str().unwrap(), "--psi", "0"], dir.path()).status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("family-1.csv")).unwrap(), solve);
}

#[test]
fn classify_counterexample_and_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("counterexample.toml");
    let o = briot(&["run", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(dir.path());
    let g = &rep["tasks"][0]["growth"];
    assert_eq!(g["class_label"], "outside");
    assert!((g["scrX1_value"].as_f64().unwrap() - 0.25).abs() <= 0.01);
    assert_eq!(rep["tasks"][1]["residual_sup"].as_f64(), Some(0.0));
    assert_eq!(rep["tasks"][1]["growth"]["class_label"], "X1d(inf)");
}

#[test]
fn classify_rejects_non_solutions_unless_verify_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("counterexample.toml");
    let o = briot(&["classify", p.to_str().unwrap(), "--candidate", "x^2"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(report(dir.path())["tasks"][0]["residual_sup"].as_f64().unwrap() > 1e-3);
    let o = briot(&["classify", p.to_str().unwrap(), "--candidate", "x^2", "--verify-only"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn reingested_family_grid_is_in_x1_plus() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("quadratic_gradient.toml");
    let args = ["--grid", "24x16", "--radii", "0.2", "--tmin", "1e-4", "--tmax", "0.2"];
    let mut fam = vec!["family", p.to_str().unwrap(), "--psi", "0,1"];
    fam.extend(args);
    assert_eq!(briot(&fam, dir.path()).status.code(), Some(0));
    let grid = dir.path().join("family-1.csv");
    let cls = dir.path().join("cls");
    let o = briot(&["classify", p.to_str().unwrap(), "--grid-file", grid.to_str().unwrap()], &cls);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let g = &report(&cls)["tasks"][0]["growth"];
    let label = g["class_label"].as_str().unwrap();
    assert!(label.starts_with("X1d(") || label == "X1_plus", "{label}");
    // on |x| = 0.1 the t²/4 term bends the log-log line near t = 0.2
    assert!((g["d_fit"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert!((g["d_fit_derivative"].as_f64().unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn verify_closed_form_and_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("quadratic_gradient.toml");
    let p = p.to_str().unwrap();
    assert_eq!(briot(&["verify", p, "--candidate", "-x*t/2 - t^2/4"], dir.path()).status.code(), Some(0));
    let o = briot(&["verify", p, "--candidate", "-x*t/2 - t^2/4 + 1e-3*t"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    // t∂_t(εt) − 3εt = −2εt, largest at t_max = 0.2
    let r = report(dir.path())["tasks"][0]["residual_sup"].as_f64().unwrap();
    assert!((r - 2e-3 * 0.2).abs() <= 1e-9, "{r}");
    assert_eq!(briot(&["verify", p, "--candidate", "x*("], dir.path()).status.code(), Some(2));
}
