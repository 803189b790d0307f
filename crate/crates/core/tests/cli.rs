use std::process::{Command, Output};

fn minedes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minedes")).args(args).output().unwrap()
}

fn repo_file(rel: &str) -> String {
    format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn validate_accepts_bundled_files() {
    let cfg = repo_file("configs/default.ini");
    for label in ["A", "B", "C", "D", "E", "F"] {
        let scenario = repo_file(&format!("scenarios/scenario_{label}.ini"));
        let out = minedes(&["validate", "--config", &cfg, "--scenario", &scenario]);
        assert!(out.status.success(), "{label}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
    }
    let out = minedes(&["validate", "--config", &repo_file("configs/small.ini"), "--scenario", "C"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_points_at_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    std::fs::write(&path, "[fleet]\ntrucks = 0\n").unwrap();
    let out = minedes(&["validate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("trucks"), "{err}");
}

#[test]
fn unknown_scenario_is_rejected() {
    let out = minedes(&["run", "--scenario", "Z"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("neither a bundled scenario"));
}

#[test]
fn run_prints_kpis_without_out_dir() {
    let out = minedes(&["run", "--scenario", "B", "--seed", "3", "--scheduler", "fixed"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["scheduler"], "fixed");
    assert_eq!(v[0]["seed"], 3);
    assert!(v[0]["kpi"]["total_trips"].as_u64().unwrap() > 100);
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = minedes(&[
        "bench",
        "--scenarios",
        "A,C",
        "--repeats",
        "2",
        "--no-events",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    assert_eq!(std::fs::read_to_string(dir.path().join("table6.csv")).unwrap(), table);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 6);
    assert!(!dir.path().join("events_A_random_0.log").exists());
    assert!(dir.path().join("kpi_C_equal_queue_1.json").exists());
}
