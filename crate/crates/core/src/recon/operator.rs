//! Multi-coil encoding operator of one frame, scaled by `1/sqrt(M)` so a
//! fully sampled Cartesian frame is unitary for a single unit coil.

use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex;

use crate::engine::{CoilProfile, Ndft};
use crate::error::{Error, Result};
use crate::fft::Fft3;
use crate::scalar::Real;
use crate::trajectories::{KPoint, Shot};
use crate::volume::{dims_of, voxel_count, ComplexVolume, Dims};

/// `[coil][shot][sample]` k-space data of one frame.
pub type FrameData<T> = Vec<Vec<Vec<Complex<T>>>>;

pub struct FrameOperator<'a, T: Real> {
    dims: Dims,
    coils: &'a CoilProfile<T>,
    shots: Vec<Ndft<T>>,
    scale: T,
    kernel: Array3<Complex<T>>,
    fft2: Fft3<T>,
}

impl<'a, T: Real> FrameOperator<'a, T> {
    pub fn new(shots: &[Shot], coils: &'a CoilProfile<T>) -> Self {
        let dims = coils.dims();
        let ops = shots
            .iter()
            .map(|s| Ndft::with_fast_path(dims, &s.points))
            .collect();
        let m = voxel_count(dims);
        let big = dims.map(|d| 2 * d);
        let fft2 = Fft3::new(big);
        let mut kernel = toeplitz_kernel::<T>(dims, shots.iter().flat_map(|s| s.points.iter()), m);
        fft2.forward(&mut kernel);
        Self {
            dims,
            coils,
            shots: ops,
            scale: T::one() / T::lit(m as f64).sqrt(),
            kernel,
            fft2,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_coils(&self) -> usize {
        self.coils.n_coils()
    }

    pub fn check_data(&self, y: &FrameData<T>) -> Result<()> {
        let ok = y.len() == self.n_coils()
            && y.iter().all(|c| {
                c.len() == self.shots.len() && c.iter().zip(&self.shots).all(|(v, op)| v.len() == op.len())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "frame data must be {} coils x {} shots matching the trajectory",
                self.n_coils(),
                self.shots.len()
            )))
        }
    }

    pub fn forward(&self, x: &ComplexVolume<T>) -> FrameData<T> {
        self.coils
            .maps
            .iter()
            .map(|s| {
                let sx = s * x;
                self.shots
                    .iter()
                    .map(|op| op.forward(&sx).into_iter().map(|v| v.scale(self.scale)).collect())
                    .collect()
            })
            .collect()
    }

    /// Adjoint with optional per-sample weights `[shot][sample]`.
    pub fn adjoint_weighted(&self, y: &FrameData<T>, weights: Option<&[Vec<T>]>) -> ComplexVolume<T> {
        let mut out = Array3::zeros(self.dims);
        for (s, yl) in self.coils.maps.iter().zip(y) {
            let mut acc = Array3::zeros(self.dims);
            for (j, (op, ys)) in self.shots.iter().zip(yl).enumerate() {
                match weights {
                    Some(w) => {
                        let wy: Vec<Complex<T>> = ys.iter().zip(&w[j]).map(|(v, &w)| v.scale(w)).collect();
                        op.adjoint_add(&wy, &mut acc);
                    }
                    None => op.adjoint_add(ys, &mut acc),
                }
            }
            ndarray::Zip::from(&mut out)
                .and(&acc)
                .and(s)
                .for_each(|o, &a, &sv| *o += sv.conj() * a);
        }
        let scale = self.scale;
        out.mapv_inplace(|v: Complex<T>| v.scale(scale));
        out
    }

    pub fn adjoint(&self, y: &FrameData<T>) -> ComplexVolume<T> {
        self.adjoint_weighted(y, None)
    }

    /// `A^H A x` through a Toeplitz embedding on a doubled grid.
    pub fn normal(&self, x: &ComplexVolume<T>) -> ComplexVolume<T> {
        let [nx, ny, nz] = self.dims;
        let mut out = Array3::zeros(self.dims);
        let mut big = Array3::<Complex<T>>::zeros(dims_of(&self.kernel));
        for s in &self.coils.maps {
            big.fill(Complex::default());
            big.slice_mut(s![..nx, ..ny, ..nz]).assign(&(s * x));
            self.fft2.forward(&mut big);
            big.zip_mut_with(&self.kernel, |b, k| *b *= *k);
            self.fft2.inverse(&mut big);
            ndarray::Zip::from(&mut out)
                .and(big.slice(s![..nx, ..ny, ..nz]))
                .and(s)
                .for_each(|o, &b, &sv| *o += sv.conj() * b);
        }
        out
    }
}

/// `K[d] = (1/M) sum_n exp(2 pi i k_n . d / N)` for offsets `|d| < N`, stored circularly on a `2N` grid.
fn toeplitz_kernel<'p, T: Real>(dims: Dims, points: impl Iterator<Item = &'p KPoint>, m: usize) -> Array3<Complex<T>> {
    let [nx, ny, nz] = dims;
    let row = |k: f64, n: usize| -> Vec<Complex<f64>> {
        (0..2 * n)
            .map(|i| {
                let d = if i < n {
                    i as f64
                } else if i > n {
                    i as f64 - 2.0 * n as f64
                } else {
                    return Complex::default();
                };
                Complex::from_polar(1.0, 2.0 * PI * k * d / n as f64)
            })
            .collect()
    };
    let mut pts: Vec<&KPoint> = points.collect();
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut kernel = Array3::<Complex<f64>>::zeros([2 * nx, 2 * ny, 2 * nz]);
    let mut plane = Array2::<Complex<f64>>::zeros((2 * nx, 2 * ny));
    let mut i = 0;
    while i < pts.len() {
        let kz = pts[i][2];
        plane.fill(Complex::default());
        while i < pts.len() && pts[i][2] == kz {
            let ex = row(pts[i][0], nx);
            let ey = row(pts[i][1], ny);
            for (a, mut line) in ex.iter().zip(plane.rows_mut()) {
                for (p, b) in line.iter_mut().zip(&ey) {
                    *p += a * b;
                }
            }
            i += 1;
        }
        let ez = row(kz, nz);
        for (p, mut lane) in plane.iter().zip(kernel.lanes_mut(Axis(2))) {
            for (v, e) in lane.iter_mut().zip(&ez) {
                *v += p * e;
            }
        }
    }
    let inv_m = 1.0 / m as f64;
    kernel.mapv(|v| Complex::new(T::lit(v.re * inv_m), T::lit(v.im * inv_m)))
}
