use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_damp-planner"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("DAMP_PLANNER_THREADS", "2")
        .output()
        .expect("spawn damp-planner")
}

fn fixture(dir: &TempDir) -> String {
    let out = run(dir.path(), &["fixture"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    dir.path().join("fixture.json").display().to_string()
}

fn report(dir: &Path, command: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn criticals_on_fixture_exit_unstable() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    let out = run(dir.path(), &["criticals", "--network", &net]);
    assert_eq!(out.status.code(), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("crossovers.csv")).unwrap();
    assert!(csv.starts_with("trace_id,f_cr_hz,re_lambda,verdict\n"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",critical")).count(), 3);
    let r = report(dir.path(), "criticals");
    assert_eq!(r["verdict"], "unstable");
    assert_eq!(r["config_hash_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn verify_at_top_node_is_stable() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    let out = run(dir.path(), &["verify", "--network", &net]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "verify");
    assert_eq!(r["verdict"], "stable");
    assert_eq!(r["verification"]["node_id"], 4);
    assert_eq!(r["verification"]["verdict_before"], "unstable");
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(!csv.lines().any(|l| l.starts_with("after,") && l.ends_with(",critical")));
}

#[test]
fn verify_at_node_3_stays_unstable() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    let out = run(dir.path(), &["verify", "--network", &net, "--node", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn traditional_damper_stays_unstable() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    let out = run(dir.path(), &["verify", "--network", &net, "--ad-mode", "traditional"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_network_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["sweep"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["sweep", "--network", "/nonexistent/net.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_is_reported() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"nodes":[1,2],"branches":[{"type":"xyz","from":1,"to":2}],"shunts":[]}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["sweep", "--network", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("xyz"));

    std::fs::write(&path, r#"{"nodes":[],"branches":[],"shunts":[]}"#).unwrap();
    let out = run(dir.path(), &["sweep", "--network", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let net = fixture(&dir);
    let out = run(dir.path(), &["sweep", "--network", &net, "--fmin", "100", "--fmax", "50"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let net = fixture(&a);
    for dir in [&a, &b] {
        let out = run(dir.path(), &["sweep", "--network", &net, "--fmax", "1000"]);
        assert_eq!(out.status.code(), Some(2));
        let out = run(dir.path(), &["rank", "--network", &net]);
        assert_eq!(out.status.code(), Some(2));
    }
    for name in ["traces.csv", "crossovers.csv", "k_c.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(report(a.path(), "sweep")["config_hash_sha256"], report(b.path(), "sweep")["config_hash_sha256"]);
}

#[test]
fn hash_tracks_configuration() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    run(dir.path(), &["criticals", "--network", &net, "--fmax", "1000"]);
    let h1 = report(dir.path(), "criticals")["config_hash_sha256"].clone();
    run(dir.path(), &["criticals", "--network", &net, "--fmax", "1001"]);
    let h2 = report(dir.path(), "criticals")["config_hash_sha256"].clone();
    assert_ne!(h1, h2);
}

#[test]
fn rank_and_plan_reports() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    run(dir.path(), &["rank", "--network", &net]);
    let r = report(dir.path(), "rank");
    assert_eq!(r["ranking"][0]["node"], 4);
    let out = run(dir.path(), &["plan", "--network", &net]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path(), "plan");
    let req = r["plan"]["required_re_y_s"].as_f64().unwrap();
    assert!((0.025..=0.075).contains(&req), "{req}");
    assert!(r["ad_calibration"]["k_v"].as_f64().unwrap() > 0.0);
    assert!(r["started_unix_s"].as_f64().unwrap() <= r["finished_unix_s"].as_f64().unwrap());
}

#[test]
fn ad_curve_family() {
    let dir = TempDir::new().unwrap();
    let net = fixture(&dir);
    let out = run(dir.path(), &["ad-curve", "--network", &net, "--k-v", "1.4", "--param", "g", "--values", "0.03,0.06"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ad_curve.csv")).unwrap();
    assert!(csv.starts_with("param,value,f_hz,re_y_ad,im_y_ad,im_re_ratio,mode\n"));
    assert!(csv.lines().any(|l| l.starts_with("g,0.03,")));
    assert!(csv.lines().any(|l| l.ends_with(",traditional")));
}
