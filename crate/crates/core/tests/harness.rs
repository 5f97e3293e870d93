use anisostable::harness::{run_experiment, run_full_suite, run_martingale_test, run_uniqueness_fingerprint, ExperimentConfig, Status};
use std::fs;

const CAUCHY: &str = r#"
experiment = "density"
seed = 1

[problem]
alphas = [1.0]

[numerics]
times = [1.0]
half_width = 20.0
spacing = 0.05
"#;

#[test]
fn empty_suite_succeeds_with_empty_bundle() {
    let cfg = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let s = run_full_suite(cfg.path(), out.path(), None).unwrap();
    assert!(s.passed);
    assert!(s.experiments.is_empty());
    assert_eq!(s.exit_code(), 0);
    assert!(out.path().join("suite.json").exists());
}

#[test]
fn corrupted_config_is_isolated_and_named() {
    let cfg = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fs::write(cfg.path().join("a_good.toml"), CAUCHY).unwrap();
    fs::write(cfg.path().join("b_bad.toml"), CAUCHY.replace("spacing", "spaceing")).unwrap();
    let s = run_full_suite(cfg.path(), out.path(), None).unwrap();
    let bad = &s.experiments["b_bad"];
    assert!(bad.config_error);
    assert!(bad.error.as_deref().unwrap().contains("spaceing"));
    let good = s.experiments.values().find(|e| !e.config_error).unwrap();
    assert!(good.passed);
    assert!(!s.passed);
    assert_eq!(s.exit_code(), 2);
}

#[test]
fn wrong_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, CAUCHY).unwrap();
    let cfg = ExperimentConfig::load(&p).unwrap();
    assert!(matches!(run_martingale_test(&cfg, dir.path()), Err(anisostable::Error::Config(_))));
    assert!(matches!(run_uniqueness_fingerprint(&cfg, dir.path()), Err(anisostable::Error::Config(_))));
}

#[test]
fn report_carries_metadata_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, CAUCHY).unwrap();
    let cfg = ExperimentConfig::load(&p).unwrap();
    let out = dir.path().join("run");
    let r = run_experiment(&cfg, &out).unwrap();
    assert_eq!(r.metadata.seed, 1);
    assert_eq!(r.metadata.config_hash.len(), 64);
    assert!(out.join("report.json").exists());
    assert!(r.verdicts.iter().all(|v| !v.statement.is_empty() && !v.invariant.is_empty()));
    assert_eq!(r.verdict("cauchy.sup_error").unwrap().status, Status::Pass);
}

#[test]
fn rerun_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, CAUCHY).unwrap();
    let cfg = ExperimentConfig::load(&p).unwrap();
    run_experiment(&cfg, &dir.path().join("a")).unwrap();
    run_experiment(&cfg, &dir.path().join("b")).unwrap();
    let mut n = 0;
    for e in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = e.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            assert_eq!(fs::read(dir.path().join("a").join(&name)).unwrap(), fs::read(dir.path().join("b").join(&name)).unwrap(), "{name:?}");
            n += 1;
        }
    }
    assert!(n >= 2);
}
