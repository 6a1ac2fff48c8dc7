use std::path::Path;
use std::process::{Command, Output};

use snake_core::scenarios::{preset, ParadigmConfig, PhantomConfig, RunConfig, TrajectoryConfig};

fn snake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snake"))
        .args(args)
        .env("SNAKE_NJOBS", "2")
        .output()
        .expect("spawn snake")
}

fn tiny() -> RunConfig {
    let mut c = preset("s1_epi", 0.1, None).unwrap();
    c.phantom = PhantomConfig::Synthetic { dims: [8, 8, 8], voxel_size_mm: [6.0; 3] };
    c.trajectory = TrajectoryConfig::Epi3d { planes_per_frame: None };
    c.n_frames = 60;
    c
}

fn write(c: &RunConfig, dir: &Path) -> String {
    let p = dir.join("config.yaml");
    std::fs::write(&p, c.to_yaml().unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn preset_round_trips_through_yaml() {
    let out = snake(&["preset", "s2_sos_static", "--scale", "0.25"]);
    assert!(out.status.success());
    let parsed = RunConfig::from_yaml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(parsed, preset("s2_sos_static", 0.25, None).unwrap());
}

#[test]
fn unknown_preset_is_a_validation_error() {
    assert_eq!(snake(&["preset", "s9"]).status.code(), Some(2));
    assert_eq!(snake(&["run", "no_such_thing"]).status.code(), Some(2));
    assert_eq!(snake(&["preset", "s3_external"]).status.code(), Some(2));
}

#[test]
fn run_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&tiny(), dir.path());
    let run_dir = dir.path().join("run");
    let out = snake(&["run", &cfg, "--seed", "4", "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = snake(&["metrics", run_dir.to_str().unwrap()]);
    assert!(m.status.success());
    let v: serde_json::Value = serde_json::from_slice(&m.stdout).unwrap();
    assert!(v["auc_pr"].as_f64().unwrap() > 0.5);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
}

#[test]
fn te_beyond_tr_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.sequence.te_ms = 80.0;
    let cfg = write(&c, dir.path());
    let out = snake(&["run", &cfg, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn stage_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.paradigm = ParadigmConfig::Rest;
    let cfg = write(&c, dir.path());
    let run_dir = dir.path().join("run");
    let out = snake(&["run", &cfg, "--out", run_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed_stage"], "analysis");
}

#[test]
fn scale_rejected_for_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&tiny(), dir.path());
    assert_eq!(snake(&["run", &cfg, "--scale", "0.5"]).status.code(), Some(2));
}

#[test]
fn traj_gen_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&tiny(), dir.path());
    let file = dir.path().join("t.snkt");
    let out = snake(&["traj", "gen", &cfg, "--out", file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = snake(&["traj", "inspect", file.to_str().unwrap(), "--dims", "8,8,8"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["shots"], 8 * 60);
    assert_eq!(v["samples_per_shot"], 64);
    assert_eq!(v["k_min"][0], -4.0);
    assert_eq!(snake(&["traj", "inspect", file.to_str().unwrap(), "--dims", "4,4,4"]).status.code(), Some(2));
}
