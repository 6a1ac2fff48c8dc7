use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::*;
use crate::analysis::AnalysisConfig;
use crate::engine::{EnergyConvention, SignalModel};
use crate::error::{Error, Result};
use crate::recon::{ReconConfig, ReconMethod, Strategy};
use crate::volume::Dims;

/// One row of the scenario overview table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub resolution_mm: f64,
    pub readout: &'static str,
    pub snr: f64,
    pub n_coils: usize,
    pub n_shots: usize,
    pub t_obs_ms: f64,
    pub tr_vol_s: f64,
    pub n_jobs: usize,
}

pub const SCENARIO_TABLE: [(&str, ScenarioRow); 3] = [
    (
        "s1",
        ScenarioRow { resolution_mm: 3.0, readout: "EPI", snr: 1000.0, n_coils: 1, n_shots: 44, t_obs_ms: 25.0, tr_vol_s: 2.2, n_jobs: 6 },
    ),
    (
        "s2",
        ScenarioRow { resolution_mm: 3.0, readout: "SoS", snr: 1000.0, n_coils: 8, n_shots: 14, t_obs_ms: 30.0, tr_vol_s: 0.7, n_jobs: 6 },
    ),
    (
        "s3",
        ScenarioRow { resolution_mm: 1.0, readout: "SPARKLING", snr: 30.0, n_coils: 32, n_shots: 48, t_obs_ms: 25.0, tr_vol_s: 2.4, n_jobs: 3 },
    ),
];

pub const TR_SHOT_MS: f64 = 50.0;
pub const TE_MS: f64 = 25.0;
pub const FLIP_ANGLE_DEG: f64 = 12.0;
/// Five-minute run at one shot every 50 ms.
pub const RUN_SHOTS: usize = 6000;
pub const MATRIX_3MM: Dims = [60, 71, 60];
pub const MATRIX_1MM: Dims = [180, 213, 180];

pub const PRESET_NAMES: [&str; 4] = ["s1_epi", "s2_sos_static", "s2_sos_dynamic", "s3_external"];

fn row(key: &str) -> ScenarioRow {
    SCENARIO_TABLE.iter().find(|(k, _)| *k == key).expect("table row").1
}

fn scaled_dims(d: Dims, s: f64) -> Dims {
    d.map(|v| ((v as f64 * s).round() as usize).max(4))
}

fn scaled_count(n: usize, s: f64) -> usize {
    ((n as f64 * s).round() as usize).max(1)
}

fn sequence(t_obs_ms: f64) -> SequenceConfig {
    SequenceConfig {
        tr_shot_ms: TR_SHOT_MS,
        te_ms: TE_MS,
        flip_angle_deg: FLIP_ANGLE_DEG,
        t_obs_ms,
        dwell_us: 10.0,
    }
}

/// Built-in scenario configs. At `scale` 1 the table values are used
/// verbatim; smaller scales shrink the matrix and the per-frame shot count
/// by `scale` and keep a shot budget of `6000 * scale`.
pub fn preset(name: &str, scale: f64, trajectory: Option<PathBuf>) -> Result<RunConfig> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale {scale} outside (0, 1]")));
    }
    let budget = ((RUN_SHOTS as f64) * scale).round() as usize;
    let base = |key: &str, dims: Dims, traj: TrajectoryConfig, n_shots: usize, recon: ReconConfig| {
        let r = row(key);
        RunConfig {
            name: name.to_string(),
            seed: 0,
            precision: Precision::F64,
            n_jobs: r.n_jobs,
            output_dir: None,
            n_frames: budget / n_shots,
            phantom: PhantomConfig::Synthetic {
                dims,
                voxel_size_mm: [r.resolution_mm / scale; 3],
            },
            sequence: sequence(r.t_obs_ms),
            trajectory: traj,
            paradigm: ParadigmConfig::default(),
            bold: BoldConfig::default(),
            coils: CoilConfig { n_coils: r.n_coils },
            model: SignalModel::Basic,
            noise: NoiseSpec {
                snr: Some(r.snr),
                energy: EnergyConvention::Mean,
            },
            recon,
            analysis: AnalysisConfig::default(),
        }
    };
    let cs = |strategy| ReconConfig {
        method: ReconMethod::Cs,
        strategy,
        ..ReconConfig::default()
    };
    let cfg = match name {
        "s1_epi" => {
            let dims = scaled_dims(MATRIX_3MM, scale);
            let planes = scaled_count(row("s1").n_shots, scale).min(dims[2]);
            let recon = ReconConfig {
                method: ReconMethod::Adjoint,
                ..ReconConfig::default()
            };
            base("s1", dims, TrajectoryConfig::Epi3d { planes_per_frame: Some(planes) }, planes, recon)
        }
        "s2_sos_static" | "s2_sos_dynamic" => {
            let dynamic = name == "s2_sos_dynamic";
            let dims = scaled_dims(MATRIX_3MM, scale);
            let center_fraction = 0.1;
            let n_center = ((center_fraction * dims[2] as f64).ceil() as usize).max(1);
            let n_shots = scaled_count(row("s2").n_shots, scale).max(n_center + 1).min(dims[2]);
            let traj = TrajectoryConfig::StackOfSpirals {
                n_samples: ((3000.0 * scale * scale).round() as usize).max(64),
                n_turns: (15.0 * scale).max(2.0),
                in_out: true,
                af: 4.0,
                center_fraction,
                dynamic,
                outer_planes: Some(n_shots - n_center),
            };
            let strategy = if dynamic { Strategy::Refined } else { Strategy::Warm };
            base("s2", dims, traj, n_shots, cs(strategy))
        }
        "s3_external" => {
            let path = trajectory.ok_or_else(|| Error::Config("s3_external needs a trajectory file".into()))?;
            let dims = scaled_dims(MATRIX_1MM, scale);
            let n_shots = scaled_count(row("s3").n_shots, scale);
            base("s3", dims, TrajectoryConfig::File { path }, n_shots, cs(Strategy::Cold))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; choose one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// Table values implied by a config (shot count needs the trajectory for external files).
pub fn summarize(cfg: &RunConfig, n_shots: usize) -> ScenarioRow {
    let readout = match cfg.trajectory {
        TrajectoryConfig::Epi3d { .. } => "EPI",
        TrajectoryConfig::StackOfSpirals { .. } => "SoS",
        TrajectoryConfig::File { .. } => "SPARKLING",
    };
    let resolution_mm = match &cfg.phantom {
        PhantomConfig::Synthetic { voxel_size_mm, .. } => voxel_size_mm[0],
        PhantomConfig::Files { .. } => f64::NAN,
    };
    ScenarioRow {
        resolution_mm,
        readout,
        snr: cfg.noise.snr.unwrap_or(f64::INFINITY),
        n_coils: cfg.coils.n_coils,
        n_shots,
        t_obs_ms: cfg.sequence.t_obs_ms,
        tr_vol_s: n_shots as f64 * cfg.sequence.tr_shot_ms * 1e-3,
        n_jobs: cfg.n_jobs,
    }
}

/// Shots per frame implied by a generated trajectory config.
pub fn shots_per_frame(cfg: &RunConfig) -> Option<usize> {
    match (&cfg.trajectory, &cfg.phantom) {
        (TrajectoryConfig::Epi3d { planes_per_frame }, PhantomConfig::Synthetic { dims, .. }) => Some(planes_per_frame.unwrap_or(dims[2])),
        (TrajectoryConfig::StackOfSpirals { center_fraction, outer_planes, af, .. }, PhantomConfig::Synthetic { dims, .. }) => {
            let nz = dims[2];
            let c = ((center_fraction * nz as f64).ceil() as usize).clamp(1, nz);
            Some(c + outer_planes.unwrap_or(((nz - c) as f64 / af).floor() as usize))
        }
        _ => None,
    }
}
