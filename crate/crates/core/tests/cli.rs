mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regret_synth::cli::config::Config;

fn canonical() -> String {
    std::fs::read_to_string(common::workspace_file("configs/double_integrator.toml")).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn cli(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regret-synth"));
    cmd.args(args);
    for (flag, p) in paths {
        cmd.arg(flag).arg(p);
    }
    cmd.output().unwrap()
}

fn synthesize(dir: &Path, config: &Path, variant: &str) -> (Output, PathBuf) {
    let out = dir.join(format!("{variant}.json"));
    let o = cli(&["synthesize", "--variant", variant], &[("--config", config), ("--out", &out)]);
    (o, out)
}

#[test]
fn synthesize_and_verify_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", &canonical());
    for variant in ["h2", "dr-energy"] {
        let (o, out) = synthesize(dir.path(), &config, variant);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert!(json["mu"].as_f64().unwrap() > 0.0);
        assert_eq!(json["controller"]["shape"][0], 11);
        let v = cli(&["verify"], &[("--config", &config), ("--result", &out)]);
        assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stdout));
        assert!(PathBuf::from(format!("{}.verify.json", out.display())).exists());
    }
}

#[test]
fn indefinite_q_is_a_config_error_naming_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let text = canonical().replace(
        "q = { shape = [2, 2], data = [1.0, 0.0, 0.0, 1.0] }",
        "q = { shape = [2, 2], data = [1.0, 0.0, 0.0, -1.0] }",
    );
    let config = write(dir.path(), "bad.toml", &text);
    let (o, _) = synthesize(dir.path(), &config, "h2");
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Q_"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "bad.toml", "horizon = \"ten\"\n");
    let (o, _) = synthesize(dir.path(), &config, "h2");
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unmeetable_constraints_are_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let text = canonical()
        .replace("data = [0.2, 0.0, -0.2, 0.0, 0.0, 0.5, 0.0, -0.5]", "data = [1.0, 0.0, -1.0, 0.0, 0.0, 0.5, 0.0, -0.5]")
        .replace("hu = { shape = [2, 1], data = [0.5, -0.5] }", "hu = { shape = [2, 1], data = [100.0, -100.0] }");
    let config = write(dir.path(), "tight.toml", &text);
    let (o, _) = synthesize(dir.path(), &config, "dr-pwb");
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let off = dir.path().join("off.json");
    let o = cli(
        &["synthesize", "--variant", "dr-pwb", "--constraints", "off"],
        &[("--config", &config), ("--out", &off)],
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn perturbed_gain_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", &canonical());
    let (o, out) = synthesize(dir.path(), &config, "dr-energy");
    assert_eq!(o.status.code(), Some(0));
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for v in json["controller"]["data"].as_array_mut().unwrap() {
        *v = serde_json::json!(v.as_f64().unwrap() * 1.1);
    }
    let bad = write(dir.path(), "perturbed.json", &serde_json::to_string(&json).unwrap());
    let report = dir.path().join("report.json");
    let v = cli(&["verify"], &[("--config", &config), ("--result", &bad), ("--out", &report)]);
    assert_eq!(v.status.code(), Some(1), "{}", String::from_utf8_lossy(&v.stdout));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let failed: Vec<&str> = rep["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"certificate_sampling"), "{failed:?}");
}

#[test]
fn pointwise_report_states_the_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", &canonical());
    let (o, out) = synthesize(dir.path(), &config, "cr-pwb");
    assert_eq!(o.status.code(), Some(0));
    let v = cli(&["verify", "--seed", "3"], &[("--config", &config), ("--result", &out)]);
    let stdout = String::from_utf8_lossy(&v.stdout);
    assert_eq!(v.status.code(), Some(0), "{stdout}");
    let line = stdout.lines().find(|l| l.contains("pointwise_below_energy")).unwrap();
    assert!(line.starts_with("[pass]") && line.contains("mu_bar = ") && line.contains(" <= mu = "), "{line}");
}

#[test]
fn benchmark_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = canonical().replace("realisations = 100", "realisations = 12");
    let config = write(dir.path(), "c.toml", &text);
    let run = |name: &str, seed: &str| -> String {
        let out = dir.path().join(name);
        let o = cli(&["benchmark", "--controllers", "h2,dr-pwb", "--seed", seed], &[("--config", &config), ("--out", &out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "5");
    assert_eq!(a, run("b.csv", "5"));
    assert_ne!(a, run("c.csv", "6"));
    assert!(a.starts_with("family,h2,dr-pwb\n"));
    assert_eq!(a.lines().count(), 8);
    assert!(dir.path().join("a.csv.summary.json").exists());
}

#[test]
fn canonical_config_round_trips() {
    let cfg = Config::parse(&canonical()).unwrap();
    let again = Config::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
    let (a, b) = (cfg.instance().unwrap(), again.instance().unwrap());
    assert_eq!(a.sys, b.sys);
    assert_eq!(a.omega, b.omega);
    assert!((a.omega - 0.1).abs() < 1e-12);
}
