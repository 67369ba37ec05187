use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gds_core::cli::io::read_record;

fn gds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gds"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = gds(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = r#"
seed = 5

[scenario]
n = 60
m1 = 8
m2 = 8
n_pilot = 2000
validation_size = 40
test_size = 200

[model]
p1 = 8
p2 = 8
variant = "separable"
d1 = 1
d2 = 1

[tuning]
lambdas = [0.3, 0.1, 0.03]
ws = [1.0]
folds = 4
"#;

fn setup(dir: &Path) -> String {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    cfg.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_fit_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let sim = tmp.path().join("sim");
    let fitd = tmp.path().join("fit");
    ok(&["simulate", "--config", &cfg, "--out", &s(&sim)]);
    for f in ["images.csv", "responses.csv", "grid.csv", "truth.csv", "test_images.csv", "val_responses.csv"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    ok(&["fit", "--config", &cfg, "--data", &s(&sim), "--out", &s(&fitd), "--lambda", "0.1", "--refit"]);
    let summary = read_record(&fitd.join("fit_summary.csv")).unwrap();
    assert_eq!(summary["lambda"], "0.1");
    assert_eq!(summary["refit"], "true");
    if summary["note"].is_empty() {
        assert_eq!(summary["w"], "0");
    } else {
        assert!(summary["note"].contains("vacuous"));
        assert_eq!(summary["w"], "1");
    }

    let evald = tmp.path().join("eval");
    ok(&["eval", "--config", &cfg, "--data", &s(&sim), "--fit", &s(&fitd), "--out", &s(&evald)]);
    let text = fs::read_to_string(evald.join("metrics.csv")).unwrap();
    let m: HashMap<&str, f64> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k, v.parse().unwrap())
        })
        .collect();
    let (rise, mse) = (m["rise"], m["mse"]);
    assert!(rise.is_finite() && rise >= 0.0);
    assert!(mse > 0.0);
}

#[test]
fn tune_writes_scores_for_each_criterion() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", &s(&sim)]);
    for crit in ["aic", "cv", "val"] {
        let out = tmp.path().join(crit);
        ok(&["tune", "--config", &cfg, "--data", &s(&sim), "--out", &s(&out), "--criterion", crit]);
        let scores = fs::read_to_string(out.join("tune_scores.csv")).unwrap();
        assert_eq!(scores.lines().count(), 4, "{crit}: {scores}");
        assert!(out.join("tune_selected.toml").exists());
        assert!(out.join("surface.csv").exists());
    }
}

#[test]
fn kappa_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    ok(&["kappa", "--fixture", "supp92", "--trials", "2000", "--out", &s(&out)]);
    let text = fs::read_to_string(out.join("kappa.csv")).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(gds(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(gds(&["nosuchcommand"]).status.code(), Some(2));
    assert_eq!(gds(&["fit"]).status.code(), Some(2));
    assert_eq!(gds(&["--help"]).status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent");
    assert_eq!(gds(&["fit", "--data", &s(&missing)]).status.code(), Some(4));
    assert_eq!(gds(&["fit", "--config", &s(&missing.join("x.toml"))]).status.code(), Some(4));

    let cfg = setup(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", &s(&sim)]);
    let bad = gds(&["fit", "--config", &cfg, "--data", &s(&sim), "--orders", "1;1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("orders"));
    assert_eq!(
        gds(&["fit", "--config", &cfg, "--data", &s(&sim), "--variant", "diagonal"]).status.code(),
        Some(2)
    );

    let broken = tmp.path().join("broken.toml");
    fs::write(&broken, "[model]\nunknown_key = 1\n").unwrap();
    assert_eq!(gds(&["simulate", "--config", &s(&broken)]).status.code(), Some(2));
}
