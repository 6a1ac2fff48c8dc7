use crate::error::{invalid, Result};
use crate::fft::index_to_freq;
use crate::phantom::SequenceParams;
use crate::volume::Dims;

use super::{centered_times, quantized_dwell, PlanKind, SamplingPlan, Shot};

/// Plane-by-plane segmented 3D EPI: one shot per kz plane, each plane a
/// row raster with alternating row direction. The first
/// `n_planes_per_volume` planes (ascending kz) are acquired.
pub fn gen_epi_3d(dims: Dims, seq: &SequenceParams, n_planes_per_volume: usize) -> Result<SamplingPlan> {
    if dims.iter().any(|&d| d == 0) {
        return Err(invalid(format!("EPI grid {dims:?} has an empty axis")));
    }
    if n_planes_per_volume == 0 || n_planes_per_volume > dims[2] {
        return Err(invalid(format!(
            "{n_planes_per_volume} planes requested from a grid with {} planes",
            dims[2]
        )));
    }
    let [nx, ny, nz] = dims;
    let n_samples = nx * ny;
    let dwell = quantized_dwell(seq.t_obs, n_samples);
    let times = centered_times(n_samples, dwell);
    let shots = (0..n_planes_per_volume)
        .map(|iz| {
            let kz = index_to_freq(iz, nz) as f64;
            let mut points = Vec::with_capacity(n_samples);
            for iy in 0..ny {
                let ky = index_to_freq(iy, ny) as f64;
                let row: Box<dyn Iterator<Item = usize>> = if iy % 2 == 0 {
                    Box::new(0..nx)
                } else {
                    Box::new((0..nx).rev())
                };
                for ix in row {
                    points.push([index_to_freq(ix, nx) as f64, ky, kz]);
                }
            }
            Shot {
                points,
                times: times.clone(),
                shot_time: 0.0,
            }
        })
        .collect();
    let mut plan = SamplingPlan {
        dims,
        shots,
        shots_per_frame: n_planes_per_volume,
        tr_shot: seq.tr_shot,
        dwell,
        kind: PlanKind::Epi3d,
        dynamic: false,
        seed: 0,
    };
    plan.assign_shot_times();
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn seq() -> SequenceParams {
        SequenceParams::from_ms(50.0, 25.0, 12.0, 25.0, 10.0).unwrap()
    }

    fn grid_set(plan: &SamplingPlan) -> BTreeSet<[i64; 3]> {
        plan.shots
            .iter()
            .flat_map(|s| s.points.iter())
            .map(|p| p.map(|v| v as i64))
            .collect()
    }

    #[test]
    fn full_grid_coverage() {
        let plan = gen_epi_3d([4, 4, 4], &seq(), 4).unwrap();
        assert_eq!(plan.shots.len(), 4);
        assert!(plan.shots.iter().all(|s| s.len() == 16));
        let total: usize = plan.shots.iter().map(|s| s.len()).sum();
        let set = grid_set(&plan);
        assert_eq!(set.len(), total);
        let oracle: BTreeSet<[i64; 3]> = (-2..2)
            .flat_map(|x| (-2..2).flat_map(move |y| (-2..2).map(move |z| [x, y, z])))
            .collect();
        assert_eq!(set, oracle);
        plan.validate().unwrap();
    }

    #[test]
    fn partial_planes_enumeration() {
        let plan = gen_epi_3d([4, 4, 4], &seq(), 2).unwrap();
        let oracle: BTreeSet<[i64; 3]> = (-2..2)
            .flat_map(|x| (-2..2).flat_map(move |y| [-2i64, -1].into_iter().map(move |z| [x, y, z])))
            .collect();
        assert_eq!(grid_set(&plan), oracle);
    }

    #[test]
    fn snake_rows_alternate() {
        let plan = gen_epi_3d([3, 2, 1], &seq(), 1).unwrap();
        let xs: Vec<f64> = plan.shots[0].points.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0, 1.0, 0.0, -1.0]);
    }

    #[test]
    fn readout_duration_and_order() {
        let plan = gen_epi_3d([8, 8, 8], &seq(), 8).unwrap();
        let s = &plan.shots[0];
        assert!((s.len() as f64 * plan.dwell - 0.025).abs() <= plan.dwell);
        assert!(s.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn scenario_one_timing() {
        let plan = gen_epi_3d([60, 71, 60], &seq(), 44).unwrap();
        assert_eq!(plan.shots_per_frame, 44);
        assert!((plan.tr_vol() - 2.2).abs() < 1e-12);
    }

    #[test]
    fn zero_axis_rejected() {
        assert!(gen_epi_3d([0, 4, 4], &seq(), 1).is_err());
        assert!(gen_epi_3d([4, 4, 4], &seq(), 5).is_err());
    }
}
