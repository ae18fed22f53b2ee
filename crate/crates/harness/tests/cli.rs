use std::fs;
use std::process::Command;

const CONFIG: &str = r#"
name = "cli"
method = "rsmd"
iterations = 200
taus = [2.0]
replications = 12
seed = 5
trace_replications = 1

[instance]
dim = 3
geometry = "l1"
set = { kind = "simplex" }
spectrum = { kind = "linear", min = 0.2, max = 1.0 }
linear = { kind = "minimizer", point = [0.6, 0.3, 0.1] }

[noise]
kind = "student_t"
sigma = 0.5
dof = 3.0

[anchor]
kind = "median"
upsilon_sigma = 0.5
"#;

fn rsmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsmd"))
}

#[test]
fn run_writes_stamped_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = tmp.path().join("out");
    let status = rsmd()
        .args(["run", cfg.to_str().unwrap(), "--threads", "2", "--out-dir", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["replications"], 12);
    let hash = report["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 16);
    assert_eq!(report["passed"], true);

    for name in ["coverage.csv", "certificates.csv", "traces/rep0_tau2.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("config_hash,"), "{name}");
        assert!(lines.all(|l| l.starts_with(&hash)), "{name}");
    }
    let certs = fs::read_to_string(out.join("certificates.csv")).unwrap();
    assert_eq!(certs.lines().count(), 1 + 12 * 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("traces/rep0_tau2.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config_hash"], hash.as_str());
    // x_0..x_N plus header
    assert_eq!(fs::read_to_string(out.join("traces/rep0_tau2.csv")).unwrap().lines().count(), 202);

    // overrides change the hash
    let out2 = tmp.path().join("out2");
    let status = rsmd()
        .args(["run", cfg.to_str().unwrap(), "--seed", "6", "--reps", "3", "--out-dir", out2.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let report2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(report2["replications"], 3);
    assert_ne!(report2["config_hash"], report["config_hash"]);
}

#[test]
fn compare_writes_quantiles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = tmp.path().join("cmp");
    let status = rsmd()
        .args(["compare", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["rsmd", "smd_untruncated"]);
    assert_eq!(fs::read_to_string(out.join("paired_gaps.csv")).unwrap().lines().count(), 13);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn bounds_prints_the_evaluators() {
    let out = rsmd()
        .args(["bounds", "L=1", "R=1", "Theta=0.5", "sigma=1", "N=100", "tau=2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!((v["bounds"]["theorem1"].as_f64().unwrap() - 4.38406).abs() < 1e-5);
    assert!((v["bounds"]["corollary1"].as_f64().unwrap() - 0.765685).abs() < 1e-6);
    assert!(v["bounds"]["theorem2"].as_f64().is_some());

    let bad = rsmd().args(["bounds", "L=1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn invalid_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("taus = [2.0]", "taus = [0.5]")).unwrap();
    let out = rsmd().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}
