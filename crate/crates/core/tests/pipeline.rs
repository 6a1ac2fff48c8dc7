use std::collections::BTreeMap;

use snake_core::phantom::TissueParams;
use snake_core::recon::{ReconConfig, ReconMethod, Strategy};
use snake_core::scenarios::*;
use snake_core::trajectories::{gen_spiral, write_trajectory_file, PlanKind, SamplingPlan, Shot};
use snake_core::volume::{read_snkv, write_snkv};

fn tiny() -> RunConfig {
    let mut c = preset("s1_epi", 0.1, None).unwrap();
    c.phantom = PhantomConfig::Synthetic { dims: [8, 8, 8], voxel_size_mm: [6.0; 3] };
    c.trajectory = TrajectoryConfig::Epi3d { planes_per_frame: None };
    c.n_frames = 60;
    c.n_jobs = 2;
    c
}

#[test]
fn same_config_twice_gives_identical_checksums() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_pipeline(&tiny(), a.path()).unwrap();
    let mb = run_pipeline(&tiny(), b.path()).unwrap();
    assert!(ma.success);
    assert_eq!(ma.artifacts, mb.artifacts);
    assert_eq!(ma.config_hash, mb.config_hash);
    for key in [DATASET_FILE, "analysis/metrics.json", "analysis/zmap.snkv", "series/frame_00000.snkv"] {
        assert!(ma.artifacts.contains_key(key), "{key}");
    }
}

#[test]
fn different_seed_changes_the_dataset() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = tiny();
    c.n_frames = 30;
    let ma = run_pipeline(&c, a.path()).unwrap();
    c.seed = 99;
    let mb = run_pipeline(&c, b.path()).unwrap();
    assert_ne!(ma.artifacts[DATASET_FILE], mb.artifacts[DATASET_FILE]);
    assert_eq!(ma.artifacts["roi.snkv"], mb.artifacts["roi.snkv"]);
}

#[test]
fn te_beyond_tr_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut c = tiny();
    c.sequence.te_ms = 60.0;
    assert!(matches!(run_pipeline(&c, &out), Err(snake_core::Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn noise_free_s1_detects_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.noise.snr = None;
    c.phantom = PhantomConfig::Synthetic { dims: [12, 12, 12], voxel_size_mm: [4.0; 3] };
    c.n_frames = 80;
    assert!(run_pipeline(&c, dir.path()).unwrap().success);
    let r = load_metrics(dir.path()).unwrap();
    assert_eq!(r.bacc, Some(1.0));
    assert_eq!(r.auc_pr, 1.0);
}

#[test]
fn single_precision_run_completes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.precision = Precision::F32;
    let m = run_pipeline(&c, dir.path()).unwrap();
    assert!(m.success, "{:?}", m.stages);
    assert!(load_metrics(dir.path()).unwrap().auc_pr > 0.5);
}

#[test]
fn analysis_failure_is_recorded_and_earlier_outputs_kept() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.paradigm = ParadigmConfig::Rest;
    let m = run_pipeline(&c, dir.path()).unwrap();
    assert!(!m.success);
    assert_eq!(m.failed_stage.as_deref(), Some("analysis"));
    assert_eq!(m.stage("reconstruction").unwrap().status, StageStatus::Ok);
    assert!(m.stage("analysis").unwrap().error.as_deref().unwrap().contains("rank"));
    assert!(dir.path().join(DATASET_FILE).exists());
    assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
}

#[test]
fn external_trajectory_with_file_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let dims = [8, 8, 8];
    // volumes from the synthetic brain, then read back from disk
    let setup = build_setup::<f64>(&tiny()).unwrap();
    let mut volumes = BTreeMap::new();
    for (t, w) in setup.phantom.tissues.iter().zip(&setup.phantom.weights) {
        let p = dir.path().join(format!("{}.snkv", t.name));
        write_snkv(&p, &w.mapv(|v| v as f32), [6.0; 3]).unwrap();
        volumes.insert(t.name.clone(), p);
    }
    let spiral = gen_spiral([8, 8], 128, 3.0, true).unwrap();
    let dwell = 25e-3 / 128.0;
    let shots: Vec<Shot> = (0..8)
        .map(|iz| Shot {
            points: spiral.iter().map(|p| [p[0], p[1], iz as f64 - 4.0]).collect(),
            times: snake_core::trajectories::centered_times(128, dwell),
            shot_time: 0.0,
        })
        .collect();
    let plan = SamplingPlan {
        dims,
        shots,
        shots_per_frame: 8,
        tr_shot: 0.05,
        dwell,
        kind: PlanKind::External,
        dynamic: false,
        seed: 0,
    };
    let traj = dir.path().join("ext.snkt");
    write_trajectory_file(&plan, &traj).unwrap();

    let mut c = preset("s3_external", 0.05, Some(traj)).unwrap();
    assert_eq!(c.noise.snr, Some(30.0));
    c.phantom = PhantomConfig::Files { volumes, tissues: None };
    c.coils.n_coils = 4;
    c.noise.snr = Some(1000.0);
    c.n_frames = 40;
    c.recon = ReconConfig {
        method: ReconMethod::Cs,
        strategy: Strategy::Cold,
        max_iters: 10,
        ..ReconConfig::default()
    };
    let run = dir.path().join("run");
    let m = run_pipeline(&c, &run).unwrap();
    assert!(m.success, "{:?}", m.stages);
    let z = read_snkv(&run.join("analysis/zmap.snkv")).unwrap();
    assert_eq!(z.data.dim(), (8, 8, 8));
    assert_eq!(TissueParams::brain_set().len(), setup.phantom.n_tissues());
}
