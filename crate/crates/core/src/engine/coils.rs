use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::volume::{dims_of, ComplexVolume, Dims};

const RSS_EPS: f64 = 1e-6;
/// Coil ring radius relative to the half field of view.
const RING_RADIUS: f64 = 2.0;
const Z_WIDTH: f64 = 1.5;

/// Complex receive sensitivities, one volume per coil.
#[derive(Debug, Clone)]
pub struct CoilProfile<T: Real = f64> {
    pub maps: Vec<ComplexVolume<T>>,
}

impl<T: Real> CoilProfile<T> {
    pub fn new(maps: Vec<ComplexVolume<T>>) -> Result<Self> {
        let p = Self { maps };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(dims: Dims) -> Self {
        Self {
            maps: vec![Array3::from_elem(dims, Complex::new(T::one(), T::zero()))],
        }
    }

    pub fn n_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn dims(&self) -> Dims {
        dims_of(&self.maps[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() {
            return Err(invalid("at least one coil map is required"));
        }
        let dims = self.dims();
        if self.maps.iter().any(|m| dims_of(m) != dims) {
            return Err(Error::Shape("coil maps must share dims".into()));
        }
        let rss = self.rss();
        if rss.iter().any(|&v| v.as_f64() > 1.0 + RSS_EPS) {
            return Err(invalid("coil root-sum-of-squares exceeds 1"));
        }
        Ok(())
    }

    /// Root-sum-of-squares magnitude per voxel.
    pub fn rss(&self) -> Array3<T> {
        let mut acc = Array3::<T>::zeros(self.dims());
        for m in &self.maps {
            acc.zip_mut_with(m, |a, s| *a += s.norm_sqr());
        }
        acc.mapv(|v| v.sqrt())
    }

    /// Coil-weighted copies `S_l * x` of a real volume.
    pub fn apply(&self, x: &Array3<T>) -> Vec<ComplexVolume<T>> {
        self.maps
            .iter()
            .map(|s| {
                let mut out = s.clone();
                out.zip_mut_with(x, |o, &v| *o = o.scale(v));
                out
            })
            .collect()
    }
}

/// Analytic birdcage-style array of `n_coils` loops on a ring around the
/// field of view. Magnitude falls off with distance to each loop and along z;
/// phase follows the direction from the loop to the voxel. Maps are scaled so
/// the largest RSS value is 1.
pub fn birdcage_coils<T: Real>(dims: Dims, n_coils: usize) -> Result<CoilProfile<T>> {
    if n_coils == 0 {
        return Err(invalid("at least one coil is required"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(invalid("coil grid has an empty axis"));
    }
    if n_coils == 1 {
        return Ok(CoilProfile::uniform(dims));
    }
    let half = dims.iter().copied().max().unwrap_or(1) as f64 / 2.0;
    let coord = |i: usize, n: usize| (i as f64 - (n as f64 - 1.0) / 2.0) / half;
    let raw: Vec<Array3<Complex<f64>>> = (0..n_coils)
        .map(|l| {
            let a = 2.0 * PI * l as f64 / n_coils as f64;
            let (cx, cy) = (RING_RADIUS * a.cos(), RING_RADIUS * a.sin());
            Array3::from_shape_fn(dims, |(i, j, k)| {
                let (x, y, z) = (coord(i, dims[0]), coord(j, dims[1]), coord(k, dims[2]));
                let (dx, dy) = (x - cx, y - cy);
                let mag = 1.0 / (0.25 + dx * dx + dy * dy) / (1.0 + (z / Z_WIDTH).powi(2));
                Complex::from_polar(mag, dy.atan2(dx) - a)
            })
        })
        .collect();
    let mut rss = Array3::<f64>::zeros(dims);
    for m in &raw {
        rss.zip_mut_with(m, |a, s| *a += s.norm_sqr());
    }
    let peak = rss.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
    let maps = raw
        .into_iter()
        .map(|m| m.mapv(|v| Complex::new(T::lit(v.re / peak), T::lit(v.im / peak))))
        .collect();
    Ok(CoilProfile { maps })
}
