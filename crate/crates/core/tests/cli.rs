//! Drives the `oa-reorder` binary.

use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oa-reorder"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_prints_every_loaded_batch() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&cli(&["simulate", "--scenario", "case2"], dir.path()));
    assert_eq!(out.lines().filter(|l| l.starts_with("batch ")).count(), 6);
    let out = ok(&cli(
        &["simulate", "--scenario", "case1", "--initial-loading"],
        dir.path(),
    ));
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("batch 2: q = "));
}

#[test]
fn simulate_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"gains_db":[16,16,16,16,16,16,16],"tilts_db":[0,0,0,0,0,0,0]}"#,
    )
    .unwrap();
    let out = ok(&cli(&["simulate", "--config", cfg.to_str().unwrap()], dir.path()));
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn staged_commands_reproduce_run() {
    let dir = tempfile::tempdir().unwrap();
    let (staged, whole) = (dir.path().join("staged"), dir.path().join("whole"));
    for cmd in ["sample", "train", "optimize", "baseline", "report"] {
        ok(&cli(&[cmd, "--scenario", "case1", "--seed", "3"], &staged));
    }
    ok(&cli(&["run", "--scenario", "case1", "--seed", "3"], &whole));
    for name in [
        "summary.json",
        "trajectory_ga_replay.csv",
        "baseline_cdf.csv",
        "twin.ckpt",
    ] {
        assert_eq!(
            std::fs::read(staged.join(name)).unwrap(),
            std::fs::read(whole.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn failures_exit_nonzero_with_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["run", "--scenario", "no/such/file.toml"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario"));

    let o = cli(&["optimize", "--scenario", "case2"], &dir.path().join("empty"));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("search") && err.contains("configs.json"), "{err}");
}
