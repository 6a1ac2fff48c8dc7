use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array3;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::*;
use crate::analysis::{analyze, MetricsReport};
use crate::engine::{birdcage_coils, read_dataset, run_acquisition, sha256_hex, Acquisition, CoilProfile, FileSink, NoiseConfig, OffResonanceTerms};
use crate::error::{Error, Result};
use crate::phantom::{
    build_bold_timecourse, ellipsoid_roi, gre_contrast, load_phantom, synthetic_phantom, BoldSpec, Paradigm, Phantom, SequenceParams, Sphere, TissueParams,
};
use crate::recon::{load_series, reconstruct_series};
use crate::scalar::Real;
use crate::trajectories::{gen_epi_3d, gen_stack_of_spirals, load_trajectory_file, write_trajectory_file, SamplingPlan};
use crate::volume::{write_snkv, Dims};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.snkd";
pub const SERIES_DIR: &str = "series";
pub const ANALYSIS_DIR: &str = "analysis";
pub const STAGES: [&str; 4] = ["setup", "acquisition", "reconstruction", "analysis"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub success: bool,
    pub failed_stage: Option<String>,
    pub stages: Vec<StageRecord>,
    /// Relative path to sha256 of every artifact written.
    pub artifacts: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(run_dir.join(MANIFEST_FILE))?)?)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Independent seed for a named stage, derived from the root seed.
pub fn stage_seed(root: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stage);
    rng.next_u64()
}

const TRAJECTORY_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Sphere layout of the synthetic brain: cortex, white matter, ventricle,
/// plus a gray-matter sphere at `focus` (voxel coordinates).
pub fn brain_spheres(dims: Dims, focus: [f64; 3]) -> Vec<Sphere> {
    let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
    let r = 0.45 * dims.iter().copied().min().unwrap_or(0) as f64;
    let tissues = TissueParams::brain_set();
    let idx = |n: &str| tissues.iter().position(|t| t.name == n).expect("brain tissue");
    let (wm, gm, csf) = (idx("WM"), idx("GM"), idx("CSF"));
    vec![
        Sphere { center: c, radius: r, tissue: gm },
        Sphere { center: c, radius: 0.75 * r, tissue: wm },
        Sphere { center: c, radius: 0.25 * r, tissue: csf },
        Sphere { center: focus, radius: 0.3 * r, tissue: gm },
    ]
}

fn frac_to_voxel(f: [f64; 3], dims: Dims) -> [f64; 3] {
    [0, 1, 2].map(|a| f[a] * (dims[a] as f64 - 1.0))
}

/// Everything the acquisition stage needs, built from a config.
pub struct Setup<T: Real> {
    pub phantom: Phantom<T>,
    pub seq: SequenceParams,
    pub plan: SamplingPlan,
    pub coils: CoilProfile<T>,
    pub paradigm: Paradigm,
    pub bold: BoldSpec<T>,
    /// Activation ground truth (gray-matter fraction inside the ellipsoid).
    pub roi: Array3<f64>,
    pub mask: Array3<bool>,
    /// Ideal contrast image at TE.
    pub reference: Array3<f64>,
    pub noise: NoiseConfig,
    pub warnings: Vec<String>,
}

pub fn build_setup<T: Real>(cfg: &RunConfig) -> Result<Setup<T>> {
    let seq = cfg.sequence.params()?;
    let mut warnings = Vec::new();
    let phantom: Phantom<T> = match &cfg.phantom {
        PhantomConfig::Synthetic { dims, voxel_size_mm } => {
            let focus = frac_to_voxel(cfg.bold.roi_center, *dims);
            let (p, w) = synthetic_phantom(*dims, *voxel_size_mm, TissueParams::brain_set(), &brain_spheres(*dims, focus))?;
            warnings.extend(w);
            p
        }
        PhantomConfig::Files { volumes, tissues } => {
            let table = match tissues {
                Some(ts) => ts.iter().map(TissueSpec::to_params).collect::<Result<Vec<_>>>()?,
                None => TissueParams::brain_set(),
            };
            let files: Vec<(String, PathBuf)> = volumes.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            load_phantom(&files, &table)?
        }
    };
    let dims = phantom.dims;
    let traj_seed = stage_seed(cfg.seed, TRAJECTORY_STREAM);
    let plan = match &cfg.trajectory {
        TrajectoryConfig::Epi3d { planes_per_frame } => gen_epi_3d(dims, &seq, planes_per_frame.unwrap_or(dims[2]))?.repeat_frames(cfg.n_frames),
        TrajectoryConfig::StackOfSpirals { .. } => {
            let spec = cfg.trajectory.sos_spec(cfg.n_frames).expect("spiral spec");
            let (p, w) = gen_stack_of_spirals(dims, &seq, &spec, traj_seed)?;
            warnings.extend(w);
            p
        }
        TrajectoryConfig::File { path } => load_trajectory_file(path, dims, &seq)?.repeat_frames(cfg.n_frames),
    };
    let coils = if cfg.coils.n_coils == 1 {
        CoilProfile::uniform(dims)
    } else {
        birdcage_coils(dims, cfg.coils.n_coils)?
    };
    let paradigm = cfg.paradigm.build(plan.run_length())?;
    let times: Vec<f64> = plan.shots.iter().map(|s| s.shot_time + seq.te).collect();
    let h_tilde = build_bold_timecourse(&paradigm, &times, cfg.bold.hrf)?;
    let gm = phantom
        .tissue_index("GM")
        .ok_or_else(|| Error::Config("phantom has no GM tissue to activate".into()))?;
    let semi = [0, 1, 2].map(|a| cfg.bold.roi_semi_axes[a] * dims[a] as f64);
    let roi_t = ellipsoid_roi(&phantom, gm, frac_to_voxel(cfg.bold.roi_center, dims), semi, cfg.bold.min_fraction)?;
    let roi = roi_t.mapv(|v| v.as_f64());
    if !roi.iter().any(|&v| v >= 0.5) {
        return Err(Error::Config("activation ROI holds no voxel with gray-matter fraction >= 0.5".into()));
    }
    let bold = BoldSpec {
        roi: roi_t,
        delta_r2s: cfg.bold.delta_r2s_hz,
        h_tilde,
        tissue: gm,
    };
    let mask = phantom.weight_sum().mapv(|v| v.as_f64() > cfg.analysis.mask_threshold);
    let mu = gre_contrast(&phantom, &seq);
    let reference = phantom.contrast_volume(&mu).mapv(|v| v.as_f64().abs());
    let noise = match cfg.noise.snr {
        Some(snr) => NoiseConfig {
            energy: cfg.noise.energy,
            ..NoiseConfig::white(snr, stage_seed(cfg.seed, NOISE_STREAM))
        },
        None => NoiseConfig::off(),
    };
    Ok(Setup {
        phantom,
        seq,
        plan,
        coils,
        paradigm,
        bold,
        roi,
        mask,
        reference,
        noise,
        warnings,
    })
}

struct Recorder {
    stages: Vec<StageRecord>,
    failed: Option<String>,
}

impl Recorder {
    fn run<R>(&mut self, name: &str, f: impl FnOnce() -> Result<R>) -> Option<R> {
        if self.failed.is_some() {
            self.stages.push(StageRecord {
                name: name.into(),
                status: StageStatus::Skipped,
                seconds: 0.0,
                error: None,
            });
            return None;
        }
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        match out {
            Ok(v) => {
                self.stages.push(StageRecord {
                    name: name.into(),
                    status: StageStatus::Ok,
                    seconds,
                    error: None,
                });
                Some(v)
            }
            Err(e) => {
                log::error!("stage {name} failed: {e}");
                self.stages.push(StageRecord {
                    name: name.into(),
                    status: StageStatus::Failed,
                    seconds,
                    error: Some(e.to_string()),
                });
                self.failed = Some(name.into());
                None
            }
        }
    }
}

fn f32_vol(v: &Array3<f64>) -> Array3<f32> {
    v.mapv(|x| x as f32)
}

/// Runs setup, acquisition, reconstruction and analysis, persisting each
/// stage's outputs under `out_dir`. A validation error is returned as
/// `Err`; a stage failure is recorded in the returned manifest.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg, out_dir),
        Precision::F32 => run_typed::<f32>(cfg, out_dir),
    }
}

fn run_typed<T: Real>(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.yaml"), cfg.to_yaml()?)?;
    let mut rec = Recorder {
        stages: Vec::new(),
        failed: None,
    };
    let mut warnings = Vec::new();
    let setup = rec.run("setup", || {
        let s = build_setup::<T>(cfg)?;
        let vs = s.phantom.voxel_size.map(|v| v as f32);
        write_snkv(&out.join("reference.snkv"), &f32_vol(&s.reference), vs)?;
        write_snkv(&out.join("roi.snkv"), &f32_vol(&s.roi), vs)?;
        write_snkv(&out.join("mask.snkv"), &s.mask.mapv(|m| if m { 1.0f32 } else { 0.0 }), vs)?;
        write_trajectory_file(&s.plan, &out.join("trajectory.snkt"))?;
        Ok(s)
    });
    if let Some(s) = &setup {
        warnings.extend(s.warnings.iter().cloned());
    }
    rec.run("acquisition", || {
        let s = setup.as_ref().expect("setup");
        let acq = Acquisition {
            phantom: &s.phantom,
            plan: &s.plan,
            coils: &s.coils,
            seq: &s.seq,
            bold: &s.bold,
            model: cfg.model,
            noise: &s.noise,
            offres: &OffResonanceTerms::Identity,
            n_jobs: cfg.n_jobs,
        };
        let mut sink = FileSink::create(&out.join(DATASET_FILE))?;
        run_acquisition(&acq, &mut sink).map(|_| ())
    });
    rec.run("reconstruction", || {
        let s = setup.as_ref().expect("setup");
        let ds = read_dataset(&out.join(DATASET_FILE))?;
        let mut rc = cfg.recon.clone();
        if rc.n_jobs == 0 {
            rc.n_jobs = cfg.n_jobs;
        }
        let series = reconstruct_series(&ds, &s.coils, &rc)?;
        series.save(&out.join(SERIES_DIR)).map(|_| ())
    });
    rec.run("analysis", || {
        let s = setup.as_ref().expect("setup");
        let (index, frames) = load_series(&out.join(SERIES_DIR))?;
        let a = analyze(&frames, index.tr_vol, &s.paradigm, &s.roi, Some(&s.mask), &s.reference, &cfg.analysis)?;
        a.save(&out.join(ANALYSIS_DIR), s.phantom.voxel_size).map(|_| ())
    });

    let manifest = RunManifest {
        name: cfg.name.clone(),
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        success: rec.failed.is_none(),
        failed_stage: rec.failed.clone(),
        stages: rec.stages,
        artifacts: checksum_tree(out)?,
        versions: versions(),
        warnings,
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&serde_json::to_value(&manifest)?)?)?;
    Ok(manifest)
}

fn versions() -> BTreeMap<String, String> {
    [
        ("snake-core", env!("CARGO_PKG_VERSION").to_string()),
        ("dataset", crate::engine::DATASET_VERSION.to_string()),
        ("trajectory", "SNKT1".to_string()),
        ("volume", "SNKV1".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// sha256 of every file under `root` except the manifest, keyed by relative path.
pub fn checksum_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE {
                continue;
            }
            out.insert(rel, sha256_hex(&fs::read(&path)?));
        }
    }
    Ok(out)
}

/// Reads a finished run's metrics report.
pub fn load_metrics(run_dir: &Path) -> Result<MetricsReport> {
    Ok(serde_json::from_slice(&fs::read(run_dir.join(ANALYSIS_DIR).join("metrics.json"))?)?)
}
