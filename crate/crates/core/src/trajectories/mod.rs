//! Timed k-space sampling plans: 3D EPI, stacks of spirals and plans read
//! from trajectory files. Coordinates are in cycles/FOV on a grid whose
//! axis of length `N` spans the half-open range `[-N/2, N/2)`.

mod epi;
mod file;
mod spiral;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::volume::Dims;

pub use epi::gen_epi_3d;
pub use file::{load_trajectory_file, parse_trajectory, serialize_trajectory, write_trajectory_file, TRAJ_MAGIC};
pub use spiral::{gen_spiral, gen_stack_of_spirals, kz_selection, StackOfSpiralsSpec};

pub type KPoint = [f64; 3];

/// One readout after one excitation.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub points: Vec<KPoint>,
    /// Sample times in seconds relative to the echo (temporal center).
    pub times: Vec<f64>,
    /// Absolute start time of the shot within the run, seconds.
    pub shot_time: f64,
}

impl Shot {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Epi3d,
    StackOfSpirals,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub dims: Dims,
    pub shots: Vec<Shot>,
    pub shots_per_frame: usize,
    /// Seconds between consecutive shots.
    pub tr_shot: f64,
    /// Seconds between consecutive samples of a shot.
    pub dwell: f64,
    pub kind: PlanKind,
    pub dynamic: bool,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn tr_vol(&self) -> f64 {
        self.shots_per_frame as f64 * self.tr_shot
    }

    pub fn n_frames(&self) -> usize {
        self.shots.len() / self.shots_per_frame.max(1)
    }

    pub fn samples_per_shot(&self) -> usize {
        self.shots.first().map_or(0, Shot::len)
    }

    pub fn frame(&self, t: usize) -> &[Shot] {
        let n = self.shots_per_frame;
        &self.shots[t * n..(t + 1) * n]
    }

    pub fn run_length(&self) -> f64 {
        self.shots.len() as f64 * self.tr_shot
    }

    /// Repeats the first frame `n_frames` times (scan-and-repeat mode).
    pub fn repeat_frames(&self, n_frames: usize) -> Self {
        let first = &self.shots[..self.shots_per_frame.min(self.shots.len())];
        let mut shots = Vec::with_capacity(first.len() * n_frames);
        for _ in 0..n_frames {
            shots.extend(first.iter().cloned());
        }
        let mut out = Self { shots, ..self.clone() };
        out.assign_shot_times();
        out
    }

    /// Sets each shot's absolute time to `global index * TR_shot`.
    pub fn assign_shot_times(&mut self) {
        let tr = self.tr_shot;
        for (g, s) in self.shots.iter_mut().enumerate() {
            s.shot_time = g as f64 * tr;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots_per_frame == 0 {
            return Err(invalid("shots_per_frame must be positive"));
        }
        frame_count(self.shots.len(), self.shots_per_frame)?;
        let mut index = 0;
        for shot in &self.shots {
            if shot.points.len() != shot.times.len() {
                return Err(invalid("each sample needs exactly one time stamp"));
            }
            if shot.times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("sample times must be strictly increasing"));
            }
            for p in &shot.points {
                check_point(p, self.dims, index)?;
                index += 1;
            }
        }
        Ok(())
    }
}

pub(crate) fn check_point(p: &KPoint, dims: Dims, index: usize) -> Result<()> {
    for a in 0..3 {
        let half = dims[a] as f64 / 2.0;
        if !(p[a] >= -half && p[a] < half) {
            return Err(Error::OutOfRange {
                index,
                coord: p[a],
                lo: -half,
                hi: half,
            });
        }
    }
    Ok(())
}

/// Number of whole frames in `total` shots; partial frames are rejected.
pub fn frame_count(total: usize, shots_per_frame: usize) -> Result<usize> {
    if shots_per_frame == 0 || total % shots_per_frame != 0 {
        return Err(Error::Indivisible {
            shots: total,
            per_frame: shots_per_frame,
        });
    }
    Ok(total / shots_per_frame)
}

/// Splits the plan into consecutive frames of `shots_per_frame` shots.
pub fn frame_partition(plan: &SamplingPlan, n_frames: usize) -> Result<Vec<Range<usize>>> {
    let n = frame_count(plan.shots.len(), plan.shots_per_frame)?;
    if n != n_frames {
        return Err(invalid(format!(
            "plan holds {n} frames of {} shots, {n_frames} requested",
            plan.shots_per_frame
        )));
    }
    Ok((0..n)
        .map(|t| t * plan.shots_per_frame..(t + 1) * plan.shots_per_frame)
        .collect())
}

/// Sample times centered on the echo: `(n - (S-1)/2) * dwell`.
pub fn centered_times(n_samples: usize, dwell: f64) -> Vec<f64> {
    let mid = (n_samples as f64 - 1.0) / 2.0;
    (0..n_samples).map(|n| (n as f64 - mid) * dwell).collect()
}

/// Dwell time spreading `n_samples` over `t_obs`, rounded to what the
/// trajectory file format can represent exactly (f32 microseconds).
pub fn quantized_dwell(t_obs: f64, n_samples: usize) -> f64 {
    let us = (t_obs / n_samples as f64 * 1e6) as f32;
    us as f64 * 1e-6
}
