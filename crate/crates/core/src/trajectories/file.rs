//! `SNKT1` trajectory files: magic, u32 shot count, u32 samples per shot,
//! u8 dimensionality (2 or 3), f32 dwell time (µs), f32 TR_shot (ms), then
//! every coordinate as little-endian f32 in cycles/FOV.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::phantom::SequenceParams;
use crate::volume::Dims;

use super::{centered_times, check_point, PlanKind, SamplingPlan, Shot};

pub const TRAJ_MAGIC: &[u8; 5] = b"SNKT1";
const HEADER_LEN: usize = 5 + 4 + 4 + 1 + 4 + 4;

pub fn serialize_trajectory(plan: &SamplingPlan) -> Result<Vec<u8>> {
    let spp = plan.samples_per_shot();
    if plan.shots.iter().any(|s| s.len() != spp) {
        return Err(invalid("trajectory files need a fixed sample count per shot"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + plan.shots.len() * spp * 12);
    out.extend_from_slice(TRAJ_MAGIC);
    out.extend_from_slice(&(plan.shots.len() as u32).to_le_bytes());
    out.extend_from_slice(&(spp as u32).to_le_bytes());
    out.push(3u8);
    out.extend_from_slice(&((plan.dwell * 1e6) as f32).to_le_bytes());
    out.extend_from_slice(&((plan.tr_shot * 1e3) as f32).to_le_bytes());
    for shot in &plan.shots {
        for p in &shot.points {
            for v in p {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_trajectory_file(plan: &SamplingPlan, path: &Path) -> Result<()> {
    fs::write(path, serialize_trajectory(plan)?)?;
    Ok(())
}

/// Parses a trajectory for a grid of `dims`. The whole file is one frame.
pub fn parse_trajectory(bytes: &[u8], dims: Dims) -> Result<SamplingPlan> {
    let bad = |reason: String| Error::Format {
        kind: "SNKT1",
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..5] != TRAJ_MAGIC {
        return Err(bad("missing magic or truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let n_shots = u32_at(5);
    let spp = u32_at(9);
    let n_dims = bytes[13] as usize;
    let dwell_us = f32_at(14);
    let tr_ms = f32_at(18);
    if n_dims != 2 && n_dims != 3 {
        return Err(bad(format!("n_dims must be 2 or 3, found {n_dims}")));
    }
    if n_shots == 0 || spp == 0 {
        return Err(bad("empty trajectory".into()));
    }
    if !(dwell_us > 0.0 && tr_ms > 0.0) {
        return Err(bad("dwell time and TR must be positive".into()));
    }
    let expected = HEADER_LEN + n_shots * spp * n_dims * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for {n_shots} shots x {spp} samples, found {}",
            bytes.len()
        )));
    }
    let dwell = dwell_us as f64 * 1e-6;
    let times = centered_times(spp, dwell);
    let mut coords = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut shots = Vec::with_capacity(n_shots);
    let mut index = 0;
    for _ in 0..n_shots {
        let mut points = Vec::with_capacity(spp);
        for _ in 0..spp {
            let mut p = [0.0; 3];
            for v in p.iter_mut().take(n_dims) {
                *v = coords.next().unwrap();
            }
            check_point(&p, dims, index)?;
            index += 1;
            points.push(p);
        }
        shots.push(Shot {
            points,
            times: times.clone(),
            shot_time: 0.0,
        });
    }
    let mut plan = SamplingPlan {
        dims,
        shots,
        shots_per_frame: n_shots,
        tr_shot: tr_ms as f64 * 1e-3,
        dwell,
        kind: PlanKind::External,
        dynamic: false,
        seed: 0,
    };
    plan.assign_shot_times();
    Ok(plan)
}

/// Loads an external trajectory; `seq.tr_shot` must agree with the file header.
pub fn load_trajectory_file(path: &Path, dims: Dims, seq: &SequenceParams) -> Result<SamplingPlan> {
    let plan = parse_trajectory(&fs::read(path)?, dims)?;
    if (plan.tr_shot - seq.tr_shot).abs() > 1e-6 {
        return Err(invalid(format!(
            "trajectory TR_shot {} s differs from sequence TR_shot {} s",
            plan.tr_shot, seq.tr_shot
        )));
    }
    Ok(plan)
}
