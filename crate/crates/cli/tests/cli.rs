use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polyharm(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polyharm"));
    cmd.args(args).env_remove("POLYHARM_THREADS");
    if let Some(t) = threads {
        cmd.env("POLYHARM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn verdict(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn kernels_suite_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyharm(&["kernels", "--n", "3", "--out", &out_arg(dir.path())], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = verdict(dir.path());
    assert_eq!(v["result"]["passed"], true);
    let c1 = v["result"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "c1")
        .unwrap()["measured"]
        .as_f64()
        .unwrap();
    assert!((c1 - 1.0 / 6.0).abs() <= 1e-4);
    let o = polyharm(&["kernels", "--n", "2"], None);
    assert_eq!(code(&o), 0);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&polyharm(&["kernels", "--n", "9"], None)), 64);
    assert_eq!(code(&polyharm(&["remove", "--field", "x1^^3"], None)), 64);
    assert_eq!(code(&polyharm(&["classify", "--field", "gamma", "--theorem", "T9"], None)), 64);
    assert_eq!(code(&polyharm(&["classify"], None)), 64);
    assert_eq!(code(&polyharm(&["frobnicate"], None)), 64);
    assert_eq!(code(&polyharm(&["remove", "--field", "x1", "--m", "1", "--theorem", "T2"], None)), 64);
    assert_eq!(code(&polyharm(&["kernels"], Some("zero"))), 64);
}

#[test]
fn fundamental_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyharm(&["fundamental", "--m", "2", "--n", "3", "--out", &out_arg(dir.path())], None);
    assert_eq!(code(&o), 0);
    let v = verdict(dir.path());
    assert_eq!(v["result"]["constant"], 2.0);
    let at_half = v["result"]["rows"][1]["measured"].as_f64().unwrap();
    assert!((at_half - 4.0).abs() <= 1e-3);
    let o = polyharm(&["fundamental", "--m", "3", "--n", "5"], None);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("= -8"));
    let o = polyharm(&["fundamental", "--m", "3", "--n", "4"], None);
    assert_eq!(code(&o), 65);
    assert!(!o.stderr.is_empty());
}

#[test]
fn classify_gamma_t2_is_not_removable() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyharm(
        &["classify", "--field", "gamma", "--m", "2", "--n", "3", "--theorem", "T2", "--out", &out_arg(dir.path())],
        None,
    );
    assert_eq!(code(&o), 1);
    assert_eq!(verdict(dir.path())["result"]["decision"], "NotRemovable");
    let csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(csv.starts_with("k,r,M,gauge,ratio\n"));
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn remove_x1_cubed() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyharm(&["remove", "--field", "x1^3", "--m", "2", "--n", "3", "--out", &out_arg(dir.path())], None);
    assert_eq!(code(&o), 0);
    let v = verdict(dir.path());
    assert_eq!(v["result"]["verdict"]["decision"], "Removable");
    assert!(v["result"]["extension_at_origin"].as_f64().unwrap().abs() <= 1e-4);
    assert_eq!(v["config"]["field"], "x1^3");
    assert!(v["version"].is_string());
    for f in ["verdict.json", "profile.csv", "residuals.csv"] {
        let bytes = fs::read(dir.path().join(f)).unwrap();
        assert!(!bytes.contains(&b'\r'), "{f} has CR");
        assert!(bytes.ends_with(b"\n"));
    }
    let res = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    assert!(res.starts_with("i,k,residual,exact_error,argmax\n"));
    assert_eq!(res.lines().count(), 3);
}

#[test]
fn navier_torsion_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyharm(&["navier", "--field", "r^2", "--m", "2", "--n", "3", "--out", &out_arg(dir.path())], None);
    assert_eq!(code(&o), 0);
    let v = verdict(dir.path());
    assert!(v["result"]["exact_errors"][1].as_f64().unwrap() <= 1e-3);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "m = 2\nn = 3\nfield = \"gamma\"\ntheorem = \"T2\"\n").unwrap();
    let out = dir.path().join("out");
    let o = polyharm(&["classify", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out)], None);
    assert_eq!(code(&o), 1);
    assert_eq!(verdict(&out)["config"]["theorem"], "T2");
    let o = polyharm(
        &["classify", "--config", cfg.to_str().unwrap(), "--theorem", "T1", "--out", &out_arg(&out)],
        None,
    );
    assert_eq!(code(&o), 1);
    assert_eq!(verdict(&out)["config"]["theorem"], "T1");
    assert_eq!(verdict(&out)["result"]["reports"].as_array().unwrap().len(), 2);

    fs::write(&cfg, "m = 2\ncolour = \"blue\"\n").unwrap();
    let o = polyharm(&["classify", "--config", cfg.to_str().unwrap(), "--field", "gamma"], None);
    assert_eq!(code(&o), 64);
}

#[test]
fn corpus_names_resolve() {
    let o = polyharm(&["classify", "--field", "planar_cubic_t2"], None);
    assert_eq!(code(&o), 0);
    let o = polyharm(&["classify", "--field", "harmonic_plus_gamma"], None);
    assert_eq!(code(&o), 1);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let args = ["remove", "--field", "r^4", "--m", "3", "--n", "3", "--out", &out];
    let mut runs = Vec::new();
    for threads in [None, Some("1"), Some("3"), Some("1")] {
        let o = polyharm(&args, threads);
        assert_eq!(code(&o), 0);
        runs.push(snapshot(dir.path()));
    }
    assert_eq!(runs[0].len(), 3);
    for r in &runs[1..] {
        assert_eq!(r, &runs[0]);
    }
}

#[test]
fn corpus_report_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyharm(&["report", "--out", &out_arg(dir.path())], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = verdict(dir.path());
    assert_eq!(v["result"]["misclassified"], 0);
    let csv = fs::read_to_string(dir.path().join("corpus.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}
