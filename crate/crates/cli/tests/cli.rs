use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srpt-ht"))
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn walk_prints_exact_and_estimate() {
    let out = run(bin().args(["walk", "--j", "2", "--l", "3", "--paths", "20000"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("exact = 0.333333"), "{text}");
    let mc: f64 = text.lines().find_map(|l| l.strip_prefix("mc = ")).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((mc - 1.0 / 3.0).abs() < 0.02);
}

#[test]
fn dist_prints_c_r() {
    let out = run(bin().args(["dist", "--law", "exponential:1", "--r", "10"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("c_r = 3.889720"), "{text}");
    assert!(text.contains("S(c_r) = 10.000000"), "{text}");
}

#[test]
fn hand_trace_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    run(bin().arg("simulate").arg("--config").arg(configs().join("hand_trace.json")).arg("--out").arg(dir.path()));
    let got = fs::read(dir.path().join("trajectory.csv")).unwrap();
    let want = fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/hand_trace.csv")).unwrap();
    assert_eq!(String::from_utf8(got).unwrap(), String::from_utf8(want).unwrap());
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        run(bin().arg("simulate").arg("--config").arg(configs().join("simulate.json")).arg("--out").arg(dir.path()));
    }
    for name in ["trajectory.csv", "scaled.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("simulate.json");
    run(bin().arg("simulate").arg("--config").arg(&cfg).arg("--out").arg(a.path()));
    run(bin().arg("simulate").arg("--config").arg(&cfg).arg("--out").arg(b.path()).args(["--seed", "99"]));
    assert_ne!(fs::read(a.path().join("scaled.csv")).unwrap(), fs::read(b.path().join("scaled.csv")).unwrap());
}

#[test]
fn json_format_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    run(bin().arg("simulate").arg("--config").arg(configs().join("hand_trace.json")).arg("--out").arg(dir.path()).args(["--format", "json"]));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(v["horizon"], 5.0);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(configs().join("heavy_traffic.json")).unwrap()).unwrap();
    v["replications"] = 3.into();
    fs::write(&cfg, v.to_string()).unwrap();
    let out = bin().arg("sweep").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `replications`"));
}

#[test]
fn examples_print() {
    for sub in ["simulate", "sweep", "rbm"] {
        let out = run(bin().args([sub, "--example"]));
        assert!(!out.stdout.is_empty(), "{sub}");
    }
}

#[test]
fn small_sweep_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"law":{"kind":"weibull","scale":1,"shape":2},"kappa":-0.5,"r_list":[5,10],"reps":4,"a_grid":[0.5,1,2],"seed":3,"reference_steps":128}"#,
    )
    .unwrap();
    let out = run(bin().arg("sweep").arg("--config").arg(&cfg).arg("--out").arg(dir.path()));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 violations"));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("r,functional,statistic,value\n"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["hard_failure"], false);
}

#[test]
fn rbm_writes_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rbm.json");
    fs::write(&cfg, r#"{"sigma":1,"kappa":-1,"T":1,"n_steps":64,"n_paths":50,"seed":1}"#).unwrap();
    run(bin().arg("rbm").arg("--config").arg(&cfg).arg("--out").arg(dir.path()));
    let csv = fs::read_to_string(dir.path().join("rbm_endpoints.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
}
