use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::trajectories::Shot;
use crate::volume::{dims_of, ComplexVolume, Dims, RealVolume};

use super::coils::CoilProfile;
use super::ndft::Ndft;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalModel {
    /// `y = F{S mu}`.
    #[default]
    Basic,
    /// Per-tissue T2* decay across the readout plus separable off-resonance terms.
    T2s,
}

/// `sum_p c_p(t) b_p(r)` approximating off-resonance phase accrual.
#[derive(Debug, Clone, Default)]
pub enum OffResonanceTerms<T: Real = f64> {
    #[default]
    Identity,
    Separable {
        /// `c[p][n]`, one value per sample of a shot.
        c: Vec<Vec<Complex<T>>>,
        b: Vec<ComplexVolume<T>>,
    },
}

impl<T: Real> OffResonanceTerms<T> {
    pub fn n_terms(&self) -> usize {
        match self {
            Self::Identity => 1,
            Self::Separable { c, .. } => c.len(),
        }
    }

    pub fn validate(&self, dims: Dims, samples_per_shot: usize) -> Result<()> {
        if let Self::Separable { c, b } = self {
            if c.is_empty() || c.len() != b.len() {
                return Err(invalid("off-resonance terms need matching, non-empty c and b lists"));
            }
            if c.iter().any(|cp| cp.len() != samples_per_shot) {
                return Err(invalid("each c_p needs one value per readout sample"));
            }
            if b.iter().any(|bp| dims_of(bp) != dims) {
                return Err(Error::Shape("off-resonance maps must match the phantom".into()));
            }
        }
        Ok(())
    }
}

/// `[coil][sample]` data for one shot.
pub type ShotSamples<T> = Vec<Vec<Complex<T>>>;

/// Basic Fourier model: `y_l = F{S_l mu}` at the shot's k-space points.
pub fn acquire_shot_basic<T: Real>(mu: &RealVolume<T>, coils: &CoilProfile<T>, shot: &Shot) -> ShotSamples<T> {
    let op = Ndft::with_fast_path(dims_of(mu), &shot.points);
    coils.apply(mu).iter().map(|x| op.forward(x)).collect()
}

/// Extended model with per-tissue decay `exp(-t_n / T2*_i)` around the echo.
///
/// `tissue_volumes[i]` is `mu_i w_i` evaluated at TE; `t2_star` in seconds.
pub fn acquire_shot_t2s<T: Real>(
    tissue_volumes: &[RealVolume<T>],
    t2_star: &[f64],
    coils: &CoilProfile<T>,
    shot: &Shot,
    offres: &OffResonanceTerms<T>,
) -> Result<ShotSamples<T>> {
    if tissue_volumes.len() != t2_star.len() || tissue_volumes.is_empty() {
        return Err(invalid(format!(
            "{} tissue volumes but {} T2* values",
            tissue_volumes.len(),
            t2_star.len()
        )));
    }
    let dims = dims_of(&tissue_volumes[0]);
    if tissue_volumes.iter().any(|v| dims_of(v) != dims) {
        return Err(Error::Shape("tissue volumes must share dims".into()));
    }
    offres.validate(dims, shot.len())?;
    let op = Ndft::with_fast_path(dims, &shot.points);
    let mut out = vec![vec![Complex::default(); shot.len()]; coils.n_coils()];
    for (vol, &t2s) in tissue_volumes.iter().zip(t2_star) {
        let decay: Vec<T> = shot.times.iter().map(|&t| T::lit((-t / t2s).exp())).collect();
        for (acc, weighted) in out.iter_mut().zip(coils.apply(vol)) {
            match offres {
                OffResonanceTerms::Identity => {
                    let y = op.forward(&weighted);
                    for ((a, v), d) in acc.iter_mut().zip(&y).zip(&decay) {
                        *a += v.scale(*d);
                    }
                }
                OffResonanceTerms::Separable { c, b } => {
                    for (cp, bp) in c.iter().zip(b) {
                        let y = op.forward(&(bp * &weighted));
                        for (((a, v), d), cn) in acc.iter_mut().zip(&y).zip(&decay).zip(cp) {
                            *a += (*v * *cn).scale(*d);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::engine::coils::birdcage_coils;
    use crate::engine::ndft::ndft;
    use crate::fft::ifft3_centered;
    use crate::phantom::SequenceParams;
    use crate::trajectories::{gen_epi_3d, gen_spiral};
    use crate::volume::to_complex;

    type C = Complex<f64>;

    fn rand_vol(dims: Dims, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn(dims, |_| rng.random_range(0.0..1.0))
    }

    fn spiral_shot(dims: Dims, n: usize, kz: f64, t_obs: f64) -> Shot {
        let pts = gen_spiral([dims[0], dims[1]], n, 2.0, true).unwrap();
        let dwell = t_obs / n as f64;
        Shot {
            points: pts.iter().map(|p| [p[0], p[1], kz]).collect(),
            times: crate::trajectories::centered_times(n, dwell),
            shot_time: 0.0,
        }
    }

    fn rel(a: &[C], b: &[C]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn unit_coil_reduces_to_ndft() {
        let dims = [6, 6, 4];
        let mu = rand_vol(dims, 1);
        let shot = spiral_shot(dims, 50, 1.0, 0.02);
        let y = acquire_shot_basic(&mu, &CoilProfile::uniform(dims), &shot);
        assert_eq!(y.len(), 1);
        assert_eq!(y[0], ndft(&to_complex(&mu), &shot.points));
    }

    #[test]
    fn linear_in_sensitivity() {
        let dims = [6, 6, 4];
        let mu = rand_vol(dims, 2);
        let s1 = birdcage_coils::<f64>(dims, 4).unwrap().maps[1].clone();
        let coils = CoilProfile { maps: vec![s1.clone(), s1.mapv(|v| v * 2.0)] };
        let y = acquire_shot_basic(&mu, &coils, &spiral_shot(dims, 40, -2.0, 0.02));
        for (a, b) in y[0].iter().zip(&y[1]) {
            assert_eq!(*a * 2.0, *b);
        }
    }

    #[test]
    fn full_epi_frame_inverts() {
        let dims = [8, 8, 8];
        let mu = rand_vol(dims, 3);
        let seq = SequenceParams::from_ms(50.0, 25.0, 12.0, 25.0, 10.0).unwrap();
        let plan = gen_epi_3d(dims, &seq, 8).unwrap();
        let coils = birdcage_coils::<f64>(dims, 2).unwrap();
        let mut grid = vec![Array3::<C>::zeros(dims); 2];
        for shot in &plan.shots {
            let y = acquire_shot_basic(&mu, &coils, shot);
            for (l, yl) in y.iter().enumerate() {
                for (p, v) in shot.points.iter().zip(yl) {
                    let idx = p.map(|k| k as i64);
                    let ix = |a: usize| (idx[a] + (dims[a] / 2) as i64) as usize;
                    grid[l][[ix(0), ix(1), ix(2)]] = *v;
                }
            }
        }
        for (l, g) in grid.iter().enumerate() {
            let img = ifft3_centered(g);
            let want = &coils.maps[l] * &to_complex(&mu);
            for (a, b) in img.iter().zip(want.iter()) {
                assert!((a - b).norm() < 1e-6 * b.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn infinite_t2s_matches_basic() {
        let dims = [6, 5, 4];
        let vols = vec![rand_vol(dims, 4), rand_vol(dims, 5)];
        let mut mu = vols[0].clone();
        mu += &vols[1];
        let coils = birdcage_coils::<f64>(dims, 3).unwrap();
        let shot = spiral_shot(dims, 64, 0.0, 0.03);
        let basic = acquire_shot_basic(&mu, &coils, &shot);
        let ext = acquire_shot_t2s(&vols, &[f64::INFINITY; 2], &coils, &shot, &OffResonanceTerms::Identity).unwrap();
        for (a, b) in ext.iter().zip(&basic) {
            assert!(rel(a, b) < 1e-12);
        }
    }

    #[test]
    fn echo_sample_is_decay_free() {
        let dims = [4, 4, 4];
        let v = vec![rand_vol(dims, 6)];
        let coils = CoilProfile::uniform(dims);
        let shot = Shot {
            points: vec![[0.5, -1.25, 1.0]],
            times: vec![0.0],
            shot_time: 0.0,
        };
        let ext = acquire_shot_t2s(&v, &[0.028], &coils, &shot, &OffResonanceTerms::Identity).unwrap();
        let basic = acquire_shot_basic(&v[0], &coils, &shot);
        assert_eq!(ext, basic);
    }

    #[test]
    fn matches_brute_force_signal_equation() {
        let dims = [4, 4, 4];
        let vols = vec![rand_vol(dims, 7), rand_vol(dims, 8)];
        let t2 = [0.028, 0.012];
        let coils = birdcage_coils::<f64>(dims, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shot = Shot {
            points: (0..8).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect(),
            times: crate::trajectories::centered_times(8, 0.003),
            shot_time: 0.0,
        };
        let cvec: Vec<C> = shot.times.iter().map(|t| C::from_polar(1.0, 2.0 * PI * 30.0 * t)).collect();
        let bmap = Array3::from_shape_fn(dims, |(i, _, _)| C::new(1.0 + 0.1 * i as f64, -0.05));
        let offres = OffResonanceTerms::Separable {
            c: vec![vec![C::new(1.0, 0.0); 8], cvec.clone()],
            b: vec![Array3::from_elem(dims, C::new(1.0, 0.0)), bmap.clone()],
        };
        let got = acquire_shot_t2s(&vols, &t2, &coils, &shot, &offres).unwrap();
        let r = |m: usize, n: usize| (m as f64 - (n / 2) as f64) / n as f64;
        for l in 0..2 {
            for (n, k) in shot.points.iter().enumerate() {
                let mut want = C::default();
                for i in 0..2 {
                    let d = (-shot.times[n] / t2[i]).exp();
                    for p in 0..2 {
                        let c = if p == 0 { C::new(1.0, 0.0) } else { cvec[n] };
                        for ((x, y, z), w) in vols[i].indexed_iter() {
                            let b = if p == 0 { C::new(1.0, 0.0) } else { bmap[[x, y, z]] };
                            let ph = -2.0 * PI * (k[0] * r(x, 4) + k[1] * r(y, 4) + k[2] * r(z, 4));
                            want += d * c * b * coils.maps[l][[x, y, z]] * w * C::from_polar(1.0, ph);
                        }
                    }
                }
                assert!((got[l][n] - want).norm() < 1e-9 * want.norm());
            }
        }
    }

    #[test]
    fn tissue_count_mismatch_rejected() {
        let dims = [4, 4, 4];
        let v = vec![rand_vol(dims, 1)];
        let shot = spiral_shot(dims, 8, 0.0, 0.01);
        assert!(acquire_shot_t2s(&v, &[0.02, 0.03], &CoilProfile::uniform(dims), &shot, &OffResonanceTerms::Identity).is_err());
    }

    #[test]
    fn t2s_discrepancy_grows_with_readout() {
        let dims = [8, 8, 4];
        let vols = vec![rand_vol(dims, 11), rand_vol(dims, 12)];
        let mut mu = vols[0].clone();
        mu += &vols[1];
        let coils = CoilProfile::uniform(dims);
        let mut last = 0.0;
        for t_obs in [0.005, 0.01, 0.02, 0.03] {
            let shot = spiral_shot(dims, 200, 0.0, t_obs);
            let basic = acquire_shot_basic(&mu, &coils, &shot);
            let ext = acquire_shot_t2s(&vols, &[0.028, 0.05], &coils, &shot, &OffResonanceTerms::Identity).unwrap();
            let e = rel(&ext[0], &basic[0]);
            assert!(e > last);
            last = e;
        }
    }
}
