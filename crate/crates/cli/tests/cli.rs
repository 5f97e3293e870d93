use std::fs;
use std::process::Command;

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

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anisostable"))
}

#[test]
fn density_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, CAUCHY).unwrap();
    let out = bin().args(["density", "--threads", "2", "--config"]).arg(&p).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("o/report.json").exists());
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, CAUCHY.replace("half_width", "halfwidth")).unwrap();
    let out = bin().args(["density", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("halfwidth"));
}

#[test]
fn subcommand_mismatch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, CAUCHY).unwrap();
    let out = bin().args(["maximal", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_argument_exits_two() {
    assert_eq!(bin().arg("density").output().unwrap().status.code(), Some(2));
}

#[test]
fn empty_suite_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["suite", "--config"]).arg(dir.path()).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
