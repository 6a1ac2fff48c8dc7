//! Non-uniform DFT between a voxel grid and arbitrary k-space points.
//!
//! Samples are grouped by their kz value, which turns the 3D sum into one
//! z-transform per group followed by separable x/y sums per sample. Shots
//! that cover a complete Cartesian plane go through a 2D FFT instead.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex;

use crate::fft::{freq_to_index, Fft3};
use crate::scalar::Real;
use crate::trajectories::KPoint;
use crate::volume::{dims_of, ComplexVolume, Dims};

/// `exp(-2 pi i k r_m)` for every voxel index `m` along one axis.
fn phase_row<T: Real>(k: f64, n: usize) -> Vec<Complex<T>> {
    let half = (n / 2) as f64;
    (0..n)
        .map(|m| {
            let (s, c) = (-2.0 * PI * k * (m as f64 - half) / n as f64).sin_cos();
            Complex::new(T::lit(c), T::lit(s))
        })
        .collect()
}

struct KzGroup<T> {
    ez: Vec<Complex<T>>,
    members: Vec<usize>,
    /// Row-major `members.len() x nx`.
    ex: Vec<Complex<T>>,
    /// Row-major `members.len() x ny`.
    ey: Vec<Complex<T>>,
}

enum Layout<T: Real> {
    Groups(Vec<KzGroup<T>>),
    Plane {
        ez: Vec<Complex<T>>,
        /// Flat `ix * ny + iy` plane index of every sample.
        gather: Vec<usize>,
        fft: Fft3<T>,
    },
}

/// Precomputed forward/adjoint NDFT for one point set on one grid.
pub struct Ndft<T: Real> {
    dims: Dims,
    n_points: usize,
    layout: Layout<T>,
}

impl<T: Real> Ndft<T> {
    /// Direct evaluation, never taking the FFT path.
    pub fn new(dims: Dims, points: &[KPoint]) -> Self {
        Self {
            dims,
            n_points: points.len(),
            layout: Layout::Groups(group_by_kz(dims, points)),
        }
    }

    /// Uses a 2D FFT when `points` is exactly one full Cartesian kz plane.
    pub fn with_fast_path(dims: Dims, points: &[KPoint]) -> Self {
        match full_plane(dims, points) {
            Some((kz, gather)) => Self {
                dims,
                n_points: points.len(),
                layout: Layout::Plane {
                    ez: phase_row(kz, dims[2]),
                    gather,
                    fft: Fft3::new([dims[0], dims[1], 1]),
                },
            },
            None => Self::new(dims, points),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn uses_fft(&self) -> bool {
        matches!(self.layout, Layout::Plane { .. })
    }

    pub fn forward(&self, x: &ComplexVolume<T>) -> Vec<Complex<T>> {
        assert_eq!(dims_of(x), self.dims, "volume shape does not match operator");
        let [nx, ny, _] = self.dims;
        let mut y = vec![Complex::default(); self.n_points];
        match &self.layout {
            Layout::Groups(groups) => {
                let mut plane = Array2::<Complex<T>>::zeros((nx, ny));
                let mut row = vec![Complex::default(); nx];
                for g in groups {
                    z_project(x, &g.ez, &mut plane);
                    for (j, &n) in g.members.iter().enumerate() {
                        let ex = &g.ex[j * nx..(j + 1) * nx];
                        let ey = &g.ey[j * ny..(j + 1) * ny];
                        for (ix, r) in row.iter_mut().enumerate() {
                            let line = plane.row(ix);
                            let mut acc = Complex::<T>::default();
                            for (p, e) in line.iter().zip(ey) {
                                acc += *p * *e;
                            }
                            *r = acc;
                        }
                        let mut acc = Complex::<T>::default();
                        for (r, e) in row.iter().zip(ex) {
                            acc += *r * *e;
                        }
                        y[n] = acc;
                    }
                }
            }
            Layout::Plane { ez, gather, fft } => {
                let mut plane = Array2::<Complex<T>>::zeros((nx, ny));
                z_project(x, ez, &mut plane);
                let mut vol = plane.insert_axis(Axis(2));
                fft.forward_centered(&mut vol);
                let flat = vol.as_slice().expect("standard layout");
                for (dst, &i) in y.iter_mut().zip(gather) {
                    *dst = flat[i];
                }
            }
        }
        y
    }

    /// Adjoint `x[m] = sum_n y[n] exp(+2 pi i k_n r_m)`.
    pub fn adjoint(&self, y: &[Complex<T>]) -> ComplexVolume<T> {
        let mut out = Array3::zeros(self.dims);
        self.adjoint_add(y, &mut out);
        out
    }

    pub fn adjoint_add(&self, y: &[Complex<T>], out: &mut ComplexVolume<T>) {
        assert_eq!(y.len(), self.n_points, "sample count does not match operator");
        let [nx, ny, _] = self.dims;
        match &self.layout {
            Layout::Groups(groups) => {
                let mut plane = Array2::<Complex<T>>::zeros((nx, ny));
                for g in groups {
                    plane.fill(Complex::default());
                    for (j, &n) in g.members.iter().enumerate() {
                        let ex = &g.ex[j * nx..(j + 1) * nx];
                        let ey = &g.ey[j * ny..(j + 1) * ny];
                        for (ix, mut line) in plane.rows_mut().into_iter().enumerate() {
                            let a = y[n] * ex[ix].conj();
                            for (p, e) in line.iter_mut().zip(ey) {
                                *p += a * e.conj();
                            }
                        }
                    }
                    z_spread(&plane, &g.ez, out);
                }
            }
            Layout::Plane { ez, gather, fft } => {
                let mut vol = Array3::<Complex<T>>::zeros([nx, ny, 1]);
                {
                    let flat = vol.as_slice_mut().expect("standard layout");
                    for (&v, &i) in y.iter().zip(gather) {
                        flat[i] += v;
                    }
                }
                fft.inverse_centered(&mut vol);
                let scale = T::from_usize_lossy(nx * ny);
                let plane = vol.index_axis_move(Axis(2), 0).mapv(|v| v * scale);
                z_spread(&plane, ez, out);
            }
        }
    }
}

/// `plane[x, y] = sum_z vol[x, y, z] ez[z]`.
fn z_project<T: Real>(vol: &ComplexVolume<T>, ez: &[Complex<T>], plane: &mut Array2<Complex<T>>) {
    for (p, lane) in plane.iter_mut().zip(vol.lanes(Axis(2))) {
        let mut acc = Complex::<T>::default();
        for (v, e) in lane.iter().zip(ez) {
            acc += *v * *e;
        }
        *p = acc;
    }
}

/// `out[x, y, z] += plane[x, y] conj(ez[z])`.
fn z_spread<T: Real>(plane: &Array2<Complex<T>>, ez: &[Complex<T>], out: &mut ComplexVolume<T>) {
    for (p, mut lane) in plane.iter().zip(out.lanes_mut(Axis(2))) {
        for (v, e) in lane.iter_mut().zip(ez) {
            *v += *p * e.conj();
        }
    }
}

fn group_by_kz<T: Real>(dims: Dims, points: &[KPoint]) -> Vec<KzGroup<T>> {
    let [nx, ny, nz] = dims;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][2].total_cmp(&points[b][2]));
    let mut groups: Vec<KzGroup<T>> = Vec::new();
    let mut last = f64::NAN;
    for n in order {
        let p = points[n];
        if p[2] != last || groups.is_empty() {
            last = p[2];
            groups.push(KzGroup {
                ez: phase_row(p[2], nz),
                members: Vec::new(),
                ex: Vec::new(),
                ey: Vec::new(),
            });
        }
        let g = groups.last_mut().expect("group exists");
        g.members.push(n);
        g.ex.extend(phase_row::<T>(p[0], nx));
        g.ey.extend(phase_row::<T>(p[1], ny));
    }
    groups
}

/// Detects a shot made of every `(kx, ky)` grid point once at a single integer kz.
fn full_plane(dims: Dims, points: &[KPoint]) -> Option<(f64, Vec<usize>)> {
    let [nx, ny, nz] = dims;
    if points.len() != nx * ny {
        return None;
    }
    let kz = points.first()?[2];
    if kz.fract() != 0.0 || freq_to_index(kz as i64, nz).is_none() {
        return None;
    }
    let mut seen = vec![false; nx * ny];
    let mut gather = Vec::with_capacity(points.len());
    for p in points {
        if p[2] != kz || p[0].fract() != 0.0 || p[1].fract() != 0.0 {
            return None;
        }
        let ix = freq_to_index(p[0] as i64, nx)?;
        let iy = freq_to_index(p[1] as i64, ny)?;
        let i = ix * ny + iy;
        if std::mem::replace(&mut seen[i], true) {
            return None;
        }
        gather.push(i);
    }
    Some((kz, gather))
}

/// `y[n] = sum_m x[m] exp(-2 pi i k_n . r_m)` with voxel positions centered on the grid.
pub fn ndft<T: Real>(x: &ComplexVolume<T>, points: &[KPoint]) -> Vec<Complex<T>> {
    Ndft::new(dims_of(x), points).forward(x)
}

pub fn ndft_adjoint<T: Real>(y: &[Complex<T>], points: &[KPoint], dims: Dims) -> ComplexVolume<T> {
    Ndft::new(dims, points).adjoint(y)
}
