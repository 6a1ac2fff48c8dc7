use std::f64::consts::PI;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft::index_to_freq;
use crate::phantom::SequenceParams;
use crate::volume::Dims;

use super::{centered_times, quantized_dwell, PlanKind, SamplingPlan, Shot};

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

/// Maximum spiral radius for an in-plane grid, just inside the half-open range.
pub fn spiral_kmax(dims_xy: [usize; 2]) -> f64 {
    dims_xy[0].min(dims_xy[1]) as f64 / 2.0 - 0.5
}

/// Constant-angular-velocity Archimedean spiral `r = k_max * theta / theta_max`.
///
/// The in-out form runs the mirrored outward spiral backwards, then the
/// outward spiral, so it passes through k = 0 at its temporal center.
/// Coordinates are rounded to f32 precision.
pub fn gen_spiral(dims_xy: [usize; 2], n_samples: usize, n_turns: f64, in_out: bool) -> Result<Vec<[f64; 2]>> {
    if n_samples < 2 {
        return Err(invalid("a spiral needs at least two samples"));
    }
    if !(n_turns > 0.0) {
        return Err(invalid("spiral turns must be positive"));
    }
    let k_max = spiral_kmax(dims_xy);
    let theta_max = 2.0 * PI * n_turns;
    let last = (n_samples - 1) as f64;
    Ok((0..n_samples)
        .map(|n| {
            // u in [-1, 1] (in-out) or [0, 1] (out)
            let u = if in_out { 2.0 * n as f64 / last - 1.0 } else { n as f64 / last };
            let theta = u.abs() * theta_max;
            let r = k_max * u;
            [f32_exact(r * theta.cos()), f32_exact(r * theta.sin())]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackOfSpiralsSpec {
    pub n_samples: usize,
    pub n_turns: f64,
    #[serde(default = "yes")]
    pub in_out: bool,
    /// Acceleration on the outer kz planes.
    pub af: f64,
    /// Fraction of central kz planes always acquired.
    pub center_fraction: f64,
    pub dynamic: bool,
    pub n_frames: usize,
    /// Explicit outer-plane count per frame, overriding `(nz - center) / af`.
    #[serde(default)]
    pub outer_planes: Option<usize>,
}

fn yes() -> bool {
    true
}

/// kz plane indices per frame, each list in center-out order.
/// Returns the selection plus any warnings.
pub fn kz_selection(
    nz: usize,
    af: f64,
    center_fraction: f64,
    dynamic: bool,
    n_frames: usize,
    seed: u64,
    outer_planes: Option<usize>,
) -> Result<(Vec<Vec<usize>>, Vec<String>)> {
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(invalid("center_fraction must lie in (0, 1)"));
    }
    if !(af >= 1.0) {
        return Err(invalid("acceleration factor must be >= 1"));
    }
    let mut warnings = Vec::new();
    let n_center = ((center_fraction * nz as f64).ceil() as usize).clamp(1, nz);
    let start = nz / 2 - n_center / 2;
    let center: Vec<usize> = (start..start + n_center).collect();
    let outer_pool: Vec<usize> = (0..nz).filter(|i| !center.contains(i)).collect();
    let n_outer = if af == 1.0 {
        outer_pool.len()
    } else {
        outer_planes.unwrap_or(((nz - n_center) as f64 / af).floor() as usize)
    };
    if n_outer > outer_pool.len() {
        return Err(invalid(format!(
            "{n_outer} outer planes requested, only {} available",
            outer_pool.len()
        )));
    }
    if n_outer == 0 && !outer_pool.is_empty() {
        let msg = format!("acceleration {af} leaves no outer kz plane; acquiring the {n_center} center planes only");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut planes = center.clone();
        planes.extend(index::sample(rng, outer_pool.len(), n_outer).iter().map(|i| outer_pool[i]));
        planes.sort_by_key(|&i| {
            let k = index_to_freq(i, nz);
            (k.abs(), k)
        });
        planes
    };
    let frames = if dynamic {
        (0..n_frames).map(|_| draw(&mut rng)).collect()
    } else {
        let fixed = draw(&mut rng);
        vec![fixed; n_frames]
    };
    Ok((frames, warnings))
}

/// Stack of identical 2D spirals at the kz planes chosen by [`kz_selection`].
pub fn gen_stack_of_spirals(
    dims: Dims,
    seq: &SequenceParams,
    spec: &StackOfSpiralsSpec,
    seed: u64,
) -> Result<(SamplingPlan, Vec<String>)> {
    if spec.n_frames == 0 {
        return Err(invalid("n_frames must be positive"));
    }
    let spiral = gen_spiral([dims[0], dims[1]], spec.n_samples, spec.n_turns, spec.in_out)?;
    let (frames, warnings) = kz_selection(
        dims[2],
        spec.af,
        spec.center_fraction,
        spec.dynamic,
        spec.n_frames,
        seed,
        spec.outer_planes,
    )?;
    let dwell = quantized_dwell(seq.t_obs, spec.n_samples);
    let times = centered_times(spec.n_samples, dwell);
    let shots_per_frame = frames[0].len();
    let shots = frames
        .iter()
        .flatten()
        .map(|&iz| {
            let kz = index_to_freq(iz, dims[2]) as f64;
            Shot {
                points: spiral.iter().map(|p| [p[0], p[1], kz]).collect(),
                times: times.clone(),
                shot_time: 0.0,
            }
        })
        .collect();
    let mut plan = SamplingPlan {
        dims,
        shots,
        shots_per_frame,
        tr_shot: seq.tr_shot,
        dwell,
        kind: PlanKind::StackOfSpirals,
        dynamic: spec.dynamic,
        seed,
    };
    plan.assign_shot_times();
    Ok((plan, warnings))
}
