use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use etas_inference::PosteriorResult;

fn etas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etas")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "T12 = [0, 300]\nM0 = 2.5\n");
    let sim = dir.path().join("sim");
    let out = etas(&[
        "--config", &cfg, "--seed", "3", "--out", sim.to_str().unwrap(),
        "simulate", "--seed-event", "100:6.0", "--incomplete", "G=3.8,H=1.0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["catalogue.csv", "catalogue_incomplete.csv", "genealogy.json", "manifest.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }

    let fit = dir.path().join("fit");
    let out = etas(&[
        "--config", &cfg, "--out", fit.to_str().unwrap(),
        "fit", "--catalogue", sim.join("catalogue.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = PosteriorResult::from_json(&fs::read_to_string(fit.join("posterior.json")).unwrap()).unwrap();
    assert_eq!(res.marginals.len(), 5);
    assert!(fit.join("marginal_mu.csv").exists() && fit.join("trace.csv").exists() && fit.join("timing.csv").exists());

    let trig = dir.path().join("trig");
    let out = etas(&[
        "--out", trig.to_str().unwrap(), "triggering",
        "--posterior", fit.join("posterior.json").to_str().unwrap(), "--samples", "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let q = fs::read_to_string(trig.join("omori_quantiles.csv")).unwrap();
    assert_eq!(q.lines().count(), 201);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mu.initial = 0.3\n");
    let out = etas(&["--config", &cfg, "fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu.initial"));

    let out = etas(&["simulate", "--seed-event", "oops"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn prior_triggering_needs_no_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let out = etas(&["--out", dir.path().to_str().unwrap(), "triggering", "--prior", "--samples", "50", "--magnitudes", "5.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("gt_M5_samples.csv").exists());
    assert!(!dir.path().join("gt_M6.7_samples.csv").exists());
}
