//! Orthonormal periodic 3D wavelet transforms.
//!
//! Coefficients share the volume's shape in the usual pyramid layout: after
//! `J` levels the approximation occupies the corner `[0, N/2^J)` on every
//! axis and level `j` details fill the remaining octants of `[0, N/2^(j-1))`.
//! The finest diagonal (HHH) subband is `[N/2, N)` on all three axes.

use ndarray::{s, Array3, ArrayView3, Axis, Slice};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::volume::{dims_of, ComplexVolume, Dims, RealVolume};

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

const SYM8: [f64; 16] = [
    -0.0033824159510061256,
    -0.0005421323317911481,
    0.03169508781149298,
    0.007607487324917605,
    -0.1432942383508097,
    -0.061273359067658524,
    0.4813596512583722,
    0.7771857517005235,
    0.3644418948353314,
    -0.05194583810770904,
    -0.027219029917056003,
    0.049137179673607506,
    0.003808752013890615,
    -0.01495225833704823,
    -0.0003029205147213668,
    0.0018899503327594609,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    Haar,
    #[default]
    Symlet8,
}

impl WaveletFamily {
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            Self::Haar => &HAAR,
            Self::Symlet8 => &SYM8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletBasis {
    pub family: WaveletFamily,
    pub levels: usize,
}

impl Default for WaveletBasis {
    fn default() -> Self {
        Self {
            family: WaveletFamily::Symlet8,
            levels: 3,
        }
    }
}

struct Filters<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl WaveletBasis {
    pub fn new(family: WaveletFamily, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(invalid("at least one wavelet level is required"));
        }
        Ok(Self { family, levels })
    }

    /// Rejects grids whose axes are not multiples of `2^levels`.
    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        let block = 1usize << self.levels;
        if dims.iter().any(|&d| d == 0 || d % block != 0) {
            let padded = self.padded_dims(dims);
            return Err(invalid(format!(
                "{} wavelet levels need axes divisible by {block}: pad {dims:?} to {padded:?}",
                self.levels
            )));
        }
        Ok(())
    }

    /// Smallest grid covering `dims` that the transform accepts.
    pub fn padded_dims(&self, dims: Dims) -> Dims {
        let block = 1usize << self.levels;
        dims.map(|d| d.max(1).div_ceil(block) * block)
    }

    fn filters<T: Real>(&self) -> Filters<T> {
        let h = self.family.lowpass();
        let n = h.len();
        Filters {
            lo: h.iter().map(|&v| T::lit(v)).collect(),
            hi: (0..n)
                .map(|k| {
                    let v = h[n - 1 - k];
                    T::lit(if k % 2 == 0 { v } else { -v })
                })
                .collect(),
        }
    }

    pub fn forward<T: Real>(&self, x: &RealVolume<T>) -> Result<RealVolume<T>> {
        self.check_dims(dims_of(x))?;
        let f = self.filters::<T>();
        let mut c = x.clone();
        let mut size = dims_of(x);
        let mut line = Vec::new();
        for _ in 0..self.levels {
            let mut sub = c.slice_mut(s![..size[0], ..size[1], ..size[2]]);
            for axis in 0..3 {
                for mut lane in sub.lanes_mut(Axis(axis)) {
                    line.clear();
                    line.extend(lane.iter().copied());
                    let out = analysis(&line, &f);
                    for (d, v) in lane.iter_mut().zip(out) {
                        *d = v;
                    }
                }
            }
            size = size.map(|d| d / 2);
        }
        Ok(c)
    }

    pub fn inverse<T: Real>(&self, c: &RealVolume<T>) -> Result<RealVolume<T>> {
        self.check_dims(dims_of(c))?;
        let f = self.filters::<T>();
        let mut x = c.clone();
        let dims = dims_of(c);
        let mut line = Vec::new();
        for level in (0..self.levels).rev() {
            let size = dims.map(|d| d >> level);
            let mut sub = x.slice_mut(s![..size[0], ..size[1], ..size[2]]);
            for axis in (0..3).rev() {
                for mut lane in sub.lanes_mut(Axis(axis)) {
                    line.clear();
                    line.extend(lane.iter().copied());
                    let out = synthesis(&line, &f);
                    for (d, v) in lane.iter_mut().zip(out) {
                        *d = v;
                    }
                }
            }
        }
        Ok(x)
    }

    pub fn forward_complex<T: Real>(&self, x: &ComplexVolume<T>) -> Result<ComplexVolume<T>> {
        let re = self.forward(&x.mapv(|v| v.re))?;
        let im = self.forward(&x.mapv(|v| v.im))?;
        Ok(zip_complex(&re, &im))
    }

    pub fn inverse_complex<T: Real>(&self, c: &ComplexVolume<T>) -> Result<ComplexVolume<T>> {
        let re = self.inverse(&c.mapv(|v| v.re))?;
        let im = self.inverse(&c.mapv(|v| v.im))?;
        Ok(zip_complex(&re, &im))
    }

    /// Finest-level HHH subband of a coefficient array.
    pub fn finest_diagonal<'a, A>(&self, coeffs: &'a Array3<A>) -> ArrayView3<'a, A> {
        let d = dims_of(coeffs);
        coeffs.slice_each_axis(|ax| Slice::from(d[ax.axis.index()] / 2..))
    }
}

fn zip_complex<T: Real>(re: &RealVolume<T>, im: &RealVolume<T>) -> ComplexVolume<T> {
    let mut out = Array3::zeros(dims_of(re));
    ndarray::Zip::from(&mut out)
        .and(re)
        .and(im)
        .for_each(|o, &r, &i| *o = Complex::new(r, i));
    out
}

/// One periodic analysis step: lowpass half, then highpass half.
fn analysis<T: Real>(x: &[T], f: &Filters<T>) -> Vec<T> {
    let n = x.len();
    let half = n / 2;
    let mut res = vec![T::zero(); n];
    for i in 0..half {
        let (mut a, mut d) = (T::zero(), T::zero());
        for (k, (&h, &g)) in f.lo.iter().zip(&f.hi).enumerate() {
            let v = x[(2 * i + k) % n];
            a += h * v;
            d += g * v;
        }
        res[i] = a;
        res[half + i] = d;
    }
    res
}

fn synthesis<T: Real>(c: &[T], f: &Filters<T>) -> Vec<T> {
    let n = c.len();
    let half = n / 2;
    let mut x = vec![T::zero(); n];
    for i in 0..half {
        let (a, d) = (c[i], c[half + i]);
        for (k, (&h, &g)) in f.lo.iter().zip(&f.hi).enumerate() {
            x[(2 * i + k) % n] += h * a + g * d;
        }
    }
    x
}

/// Complex soft thresholding `c * max(0, 1 - tau / |c|)`.
pub fn soft_threshold<T: Real>(c: &mut ComplexVolume<T>, tau: T) {
    c.mapv_inplace(|v| {
        let m = v.norm();
        if m <= tau {
            Complex::default()
        } else {
            v.scale((m - tau) / m)
        }
    });
}
