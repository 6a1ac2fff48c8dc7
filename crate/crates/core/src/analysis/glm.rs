use ndarray::{Array2, Array3};
use rayon::prelude::*;
use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use super::design::{gram_inverse, DesignMatrix};
use crate::error::{invalid, Error, Result};
use crate::volume::{dims_of, Dims};

/// Stand-in t value for an exact, noise-free fit.
pub const T_CAP: f64 = 1e9;
#[derive(Debug, Clone)]
pub struct StatMap {
    pub beta: Array3<f64>,
    pub t: Array3<f64>,
    pub z: Array3<f64>,
    pub dof: usize,
    /// Voxels with zero temporal variance, reported with `t = 0`.
    pub flagged: Array3<bool>,
}

impl StatMap {
    pub fn dims(&self) -> Dims {
        dims_of(&self.z)
    }

    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// `z` with the same upper tail probability as `t` at `dof`. Far in the
/// tail, where the probability underflows, both tails are taken from
/// their asymptotic expansions so the map stays strictly monotone.
pub fn t_to_z(t: f64, dof: usize) -> f64 {
    if t == 0.0 || t.is_nan() {
        return 0.0;
    }
    let nu = dof as f64;
    let st = StudentsT::new(0.0, 1.0, nu).expect("positive dof");
    let tail = st.cdf(-t.abs());
    let z = if tail > 1e-280 {
        -Normal::standard().inverse_cdf(tail)
    } else {
        let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
        let ln_tail = ln_c + 0.5 * (nu - 1.0) * nu.ln() - nu * t.abs().ln();
        normal_tail_inverse(ln_tail)
    };
    z.copysign(t)
}

/// Solves `ln Q(z) = ln_tail` with `ln Q(z) ~ -z^2/2 - ln(z sqrt(2 pi))`.
fn normal_tail_inverse(ln_tail: f64) -> f64 {
    let c0 = 0.5 * (2.0 * PI).ln();
    let mut z = (-2.0 * ln_tail).sqrt();
    for _ in 0..50 {
        let g = -0.5 * z * z - z.ln() - c0 - ln_tail;
        let step = g / (z + 1.0 / z);
        z += step;
        if step.abs() < 1e-14 * z {
            break;
        }
    }
    z
}

struct VoxelFit {
    beta: f64,
    t: f64,
    flagged: bool,
}

fn fit_voxel(y: &[f64], x: &Array2<f64>, pinv: &Array2<f64>, c_var: f64, task: usize, dof: usize, floor_rel: f64) -> VoxelFit {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if tss <= (1e-14 * scale).powi(2) * n as f64 {
        return VoxelFit { beta: 0.0, t: 0.0, flagged: true };
    }
    let p = x.ncols();
    let beta: Vec<f64> = (0..p).map(|j| (0..n).map(|i| pinv[[j, i]] * y[i]).sum()).collect();
    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - (0..p).map(|j| x[[i, j]] * beta[j]).sum::<f64>();
            r * r
        })
        .sum();
    let b = beta[task];
    let t = if rss <= 1e-24 * tss {
        if b == 0.0 {
            0.0
        } else {
            T_CAP.copysign(b)
        }
    } else {
        let sigma2 = (rss / dof as f64).max((floor_rel * mean).powi(2));
        (b / (sigma2 * c_var).sqrt()).clamp(-T_CAP, T_CAP)
    };
    VoxelFit { beta: b, t, flagged: false }
}

/// Voxel-wise OLS of each time series on the design, testing the task column.
pub fn glm_fit(series: &[Array3<f64>], design: &DesignMatrix) -> Result<StatMap> {
    glm_fit_floored(series, design, 0.0)
}

/// [`glm_fit`] with the residual standard deviation held at or above
/// `floor_rel * |temporal mean|`.
pub fn glm_fit_floored(series: &[Array3<f64>], design: &DesignMatrix, floor_rel: f64) -> Result<StatMap> {
    if !(floor_rel >= 0.0) {
        return Err(invalid("relative sigma floor must be non-negative"));
    }
    let n = series.len();
    if n != design.n_rows() {
        return Err(invalid(format!(
            "series has {n} frames, design has {} rows",
            design.n_rows()
        )));
    }
    let p = design.n_cols();
    if n <= p {
        return Err(invalid(format!("{n} frames leave no residual degrees of freedom for {p} regressors")));
    }
    let dims = dims_of(&series[0]);
    if series.iter().any(|s| dims_of(s) != dims) {
        return Err(Error::Shape("series frames differ in shape".into()));
    }
    let dof = n - p;
    let inv = gram_inverse(&design.x)?;
    let pinv = inv.dot(&design.x.t());
    let c_var = inv[[design.task, design.task]];
    let flat: Vec<&[f64]> = series
        .iter()
        .map(|s| s.as_slice().ok_or_else(|| Error::Shape("non-contiguous frame".into())))
        .collect::<Result<_>>()?;
    let nv = flat[0].len();
    let fits: Vec<VoxelFit> = (0..nv)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |y, v| {
                for (t, f) in flat.iter().enumerate() {
                    y[t] = f[v];
                }
                fit_voxel(y, &design.x, &pinv, c_var, design.task, dof, floor_rel)
            },
        )
        .collect();
    let shape = |f: &dyn Fn(&VoxelFit) -> f64| Array3::from_shape_vec(dims, fits.iter().map(f).collect()).expect("dims");
    let beta = shape(&|v| v.beta);
    let t = shape(&|v| v.t);
    let z = t.mapv(|v| t_to_z(v, dof));
    let flagged = Array3::from_shape_vec(dims, fits.iter().map(|v| v.flagged).collect()).expect("dims");
    Ok(StatMap { beta, t, z, dof, flagged })
}
