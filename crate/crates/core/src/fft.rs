//! Axis-wise 3D FFTs on `ndarray` volumes.
//!
//! The centered transform uses the simulator's k-space convention: array
//! index `i` along an axis of length `N` holds frequency `k = i - N/2`
//! (integer division) and voxel `m` sits at `(m - N/2) / N`, so
//! `y[k] = sum_m x[m] exp(-2 pi i k (m - N/2) / N)`.

use std::sync::Arc;

use ndarray::{Array3, Axis};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;
use crate::volume::{voxel_count, Dims};

/// Planned forward/inverse transforms for a fixed volume shape.
pub struct Fft3<T: Real> {
    dims: Dims,
    fwd: [Arc<dyn Fft<T>>; 3],
    inv: [Arc<dyn Fft<T>>; 3],
}

impl<T: Real> Fft3<T> {
    pub fn new(dims: Dims) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, fwd, inv }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn run(&self, data: &mut Array3<Complex<T>>, inverse: bool, centered: bool) {
        assert_eq!(data.shape(), &self.dims[..], "volume shape does not match plan");
        let mut line = Vec::new();
        for axis in 0..3 {
            let n = self.dims[axis];
            if n == 1 {
                continue;
            }
            let plan = if inverse { &self.inv[axis] } else { &self.fwd[axis] };
            let c = n / 2;
            let mut scratch = vec![Complex::default(); plan.get_inplace_scratch_len()];
            for mut lane in data.lanes_mut(Axis(axis)) {
                line.clear();
                line.extend(lane.iter().copied());
                if centered {
                    line.rotate_left(c);
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                if centered {
                    line.rotate_right(c);
                }
                for (dst, src) in lane.iter_mut().zip(&line) {
                    *dst = *src;
                }
            }
        }
        if inverse {
            let scale = T::one() / T::from_usize_lossy(voxel_count(self.dims));
            data.mapv_inplace(|v| v * scale);
        }
    }

    /// Centered forward transform (unnormalized).
    pub fn forward_centered(&self, data: &mut Array3<Complex<T>>) {
        self.run(data, false, true);
    }

    /// Centered inverse transform, normalized by `1/M`.
    pub fn inverse_centered(&self, data: &mut Array3<Complex<T>>) {
        self.run(data, true, true);
    }

    /// Plain circular forward transform (unnormalized).
    pub fn forward(&self, data: &mut Array3<Complex<T>>) {
        self.run(data, false, false);
    }

    /// Plain circular inverse transform, normalized by `1/M`.
    pub fn inverse(&self, data: &mut Array3<Complex<T>>) {
        self.run(data, true, false);
    }
}

pub fn fft3_centered<T: Real>(x: &Array3<Complex<T>>) -> Array3<Complex<T>> {
    let mut out = x.clone();
    Fft3::new([x.shape()[0], x.shape()[1], x.shape()[2]]).forward_centered(&mut out);
    out
}

pub fn ifft3_centered<T: Real>(y: &Array3<Complex<T>>) -> Array3<Complex<T>> {
    let mut out = y.clone();
    Fft3::new([y.shape()[0], y.shape()[1], y.shape()[2]]).inverse_centered(&mut out);
    out
}

/// Integer frequency stored at array index `i` along an axis of length `n`.
#[inline]
pub fn index_to_freq(i: usize, n: usize) -> i64 {
    i as i64 - (n / 2) as i64
}

/// Array index of integer frequency `k`, if it lies in the half-open grid.
#[inline]
pub fn freq_to_index(k: i64, n: usize) -> Option<usize> {
    let i = k + (n / 2) as i64;
    (0..n as i64).contains(&i).then_some(i as usize)
}

/// Normalized position of voxel `m` along an axis of length `n`.
#[inline]
pub fn voxel_position<T: Real>(m: usize, n: usize) -> T {
    T::from_usize_lossy(m) / T::from_usize_lossy(n) - T::from_usize_lossy(n / 2) / T::from_usize_lossy(n)
}
