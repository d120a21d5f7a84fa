use std::path::Path;
use std::process::{Command, Output};

fn homoglat(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_homoglat"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("HOMOGLAT_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    let out = dir.join(name.trim_end_matches(".conf"));
    std::fs::write(&path, format!("{body}\nout = {}\n", out.display())).unwrap();
    path.display().to_string()
}

const SMALL: &str = "experiment = variance-scaling\nd = 2\nN = 32\nL_grid = 2, 4\nT_grid = 16\nsamples = 10\nseed = 5";

#[test]
fn malformed_config_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "bad.conf", "experiment = variance-scaling\nd = 2\nN = many");
    let out = homoglat(&["run", &path], None);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");

    let path = write_config(dir.path(), "unknown.conf", "experiment = variance-scaling\nbogus = 1");
    let out = homoglat(&["info", &path], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn strict_torus_rule_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "small_torus.conf",
        "experiment = variance-scaling\nd = 2\nN = 16\nL_grid = 2, 4\nT_grid = 64\nsamples = 4",
    );
    assert_eq!(homoglat(&["run", &path], None).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small.conf", SMALL);
    let stem = dir.path().join("small");
    let mut files = Vec::new();
    for threads in ["1", "2", "1"] {
        let out = homoglat(&["run", &path], Some(threads));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        files.push((
            std::fs::read(stem.with_extension("csv")).unwrap(),
            std::fs::read(stem.with_extension("json")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn export_reemits_stored_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small.conf", SMALL);
    assert!(homoglat(&["run", &path], None).status.success());
    let json = dir.path().join("small.json");
    let json = json.to_str().unwrap();

    let csv = homoglat(&["export", json, "--format", "csv"], None);
    assert!(csv.status.success());
    assert_eq!(csv.stdout, std::fs::read(dir.path().join("small.csv")).unwrap());

    let copy = dir.path().join("copy.json");
    let out = homoglat(&["export", json, "--format", "json", "--output", copy.to_str().unwrap()], None);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(json).unwrap());

    let missing = homoglat(&["export", "/nonexistent/result.json"], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn info_prints_schema_and_torus_diagnostics() {
    let out = homoglat(&["info"], None);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["experiment", "L_grid", "T_grid", "law.kind", "torus_rule"] {
        assert!(text.contains(key), "{key}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "relaxed.conf",
        "experiment = variance-scaling\nd = 2\nN = 16\nL_grid = 2, 4\nT_grid = 64\nsamples = 4\ntorus_rule = relaxed",
    );
    let out = homoglat(&["info", &path], None);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("torus rule (relaxed)") && !text.contains("satisfied"), "{text}");
}

#[test]
fn check_battery_passes() {
    let out = homoglat(&["check"], None);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("0 failed"));
}

#[test]
fn bad_thread_count_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "small.conf", SMALL);
    let out = homoglat(&["run", &path], Some("lots"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("HOMOGLAT_THREADS"));
}
