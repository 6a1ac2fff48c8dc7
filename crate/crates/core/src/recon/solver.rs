//! Wavelet-sparse reconstruction of one frame with POGM.

use ndarray::{s, Array3};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::volume::{dims_of, ComplexVolume, Dims};

use super::operator::{FrameData, FrameOperator};
use super::wavelet::{soft_threshold, WaveletBasis};

const POWER_ITERS: usize = 20;
const LIPSCHITZ_MARGIN: f64 = 1.05;
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FrameEstimate<T: Real = f64> {
    pub volume: ComplexVolume<T>,
    /// Objective at the initial point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub mu_used: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative objective change that ends the iterations.
    pub tol: f64,
}

/// Data-consistency terms shared by every solve on one frame.
pub struct CsProblem<'a, T: Real> {
    op: &'a FrameOperator<'a, T>,
    aty: ComplexVolume<T>,
    y_norm2: f64,
    lipschitz: f64,
}

fn dot<T: Real>(a: &ComplexVolume<T>, b: &ComplexVolume<T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re.as_f64() * y.re.as_f64() + x.im.as_f64() * y.im.as_f64())
        .sum()
}

fn norm2<T: Real>(a: &ComplexVolume<T>) -> f64 {
    a.iter().map(|v| v.norm_sqr().as_f64()).sum()
}

fn pad<T: Real>(x: &ComplexVolume<T>, to: Dims) -> ComplexVolume<T> {
    let d = dims_of(x);
    if d == to {
        return x.clone();
    }
    let mut out = Array3::zeros(to);
    out.slice_mut(s![..d[0], ..d[1], ..d[2]]).assign(x);
    out
}

fn crop<T: Real>(x: &ComplexVolume<T>, to: Dims) -> ComplexVolume<T> {
    if dims_of(x) == to {
        return x.clone();
    }
    x.slice(s![..to[0], ..to[1], ..to[2]]).to_owned()
}

impl<'a, T: Real> CsProblem<'a, T> {
    pub fn new(op: &'a FrameOperator<'a, T>, y: &FrameData<T>) -> Result<Self> {
        op.check_data(y)?;
        let aty = op.adjoint(y);
        let y_norm2 = y.iter().flatten().flatten().map(|v| v.norm_sqr().as_f64()).sum();
        let lipschitz = power_iteration(op) * LIPSCHITZ_MARGIN;
        Ok(Self {
            op,
            aty,
            y_norm2,
            lipschitz,
        })
    }

    /// `A^H y`.
    pub fn adjoint_data(&self) -> &ComplexVolume<T> {
        &self.aty
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `1/2 ||Ax - y||^2` given `A^H A x`.
    fn fidelity(&self, x: &ComplexVolume<T>, normal_x: &ComplexVolume<T>) -> f64 {
        0.5 * (dot(x, normal_x) - 2.0 * dot(x, &self.aty) + self.y_norm2).max(0.0)
    }

    pub fn objective(&self, x: &ComplexVolume<T>, mu: f64, basis: &WaveletBasis) -> Result<f64> {
        let n = self.op.normal(x);
        let pdims = basis.padded_dims(dims_of(x));
        let l1: f64 = basis.forward_complex(&pad(x, pdims))?.iter().map(|c| c.norm().as_f64()).sum();
        Ok(self.fidelity(x, &n) + mu * l1)
    }

    /// Minimizes `1/2 ||Ax - y||^2 + mu ||Psi x||_1` from `init`.
    ///
    /// Returns the iterate with the lowest objective seen, so the result is
    /// never worse than the initial point.
    pub fn solve(&self, init: &ComplexVolume<T>, mu: f64, basis: &WaveletBasis, opts: SolverOptions) -> Result<FrameEstimate<T>> {
        if opts.max_iters == 0 || !(opts.tol > 0.0) {
            return Err(invalid("max_iters must be >= 1 and tol > 0"));
        }
        if !(mu >= 0.0) {
            return Err(invalid(format!("regularization weight must be non-negative, got {mu}")));
        }
        let dims = self.op.dims();
        if dims_of(init) != dims {
            return Err(Error::Shape(format!("init {:?} differs from grid {dims:?}", dims_of(init))));
        }
        let pdims = basis.padded_dims(dims);
        basis.check_dims(pdims)?;

        let eval = |x: &ComplexVolume<T>| -> Result<(f64, ComplexVolume<T>)> {
            let xc = crop(x, dims);
            let n = self.op.normal(&xc);
            let l1: f64 = basis.forward_complex(x)?.iter().map(|c| c.norm().as_f64()).sum();
            let obj = self.fidelity(&xc, &n) + mu * l1;
            // gradient of the data term on the padded grid
            let mut g = n;
            g -= &self.aty;
            Ok((obj, pad(&g, pdims)))
        };
        let prox = |z: &ComplexVolume<T>, t: f64| -> Result<ComplexVolume<T>> {
            let mut c = basis.forward_complex(z)?;
            soft_threshold(&mut c, T::lit(mu * t));
            basis.inverse_complex(&c)
        };

        let lf = self.lipschitz;
        let mut x = pad(init, pdims);
        let (f0, mut grad) = eval(&x)?;
        let mut trace = vec![f0];
        let mut best = (f0, x.clone(), 0);
        let mut w = x.clone();
        let mut z = x.clone();
        let mut theta = 1.0f64;
        let mut zeta = 1.0 / lf;
        let mut prev = f0;
        let mut iterations = 0;
        for iter in 1..=opts.max_iters {
            iterations = iter;
            let w_old = w.clone();
            let theta_old = theta;
            let c = if iter < opts.max_iters { 4.0 } else { 8.0 };
            theta = (1.0 + (c * theta * theta + 1.0).sqrt()) / 2.0;
            let beta = (theta_old - 1.0) / theta;
            let gamma = theta_old / theta;
            let c3 = beta / (lf * zeta);
            zeta = (2.0 * theta_old + theta - 1.0) / (lf * theta);

            let step = T::lit(-1.0 / lf);
            let grad_step = grad.mapv(|v| v.scale(step));
            w = &x + &grad_step;
            let zmx = &z - &x;
            z = &w
                + &(&w - &w_old).mapv(|v| v.scale(T::lit(beta)))
                + grad_step.mapv(|v| v.scale(T::lit(gamma)))
                + zmx.mapv(|v| v.scale(T::lit(c3)));
            x = prox(&z, zeta)?;

            let (f, g) = eval(&x)?;
            grad = g;
            if !f.is_finite() || f > DIVERGENCE_FACTOR * f0.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged {
                    iteration: iter,
                    objective: f,
                    initial: f0,
                });
            }
            trace.push(f);
            if f < best.0 {
                best = (f, x.clone(), iter);
            }
            if f > prev {
                theta = 1.0;
            }
            let rel = (prev - f).abs() / prev.abs().max(f64::MIN_POSITIVE);
            prev = f;
            if rel < opts.tol {
                break;
            }
        }
        Ok(FrameEstimate {
            volume: crop(&best.1, dims),
            objective_trace: trace,
            mu_used: mu,
            iterations,
        })
    }
}

/// Largest eigenvalue of `A^H A` by power iteration from a seeded start.
fn power_iteration<T: Real>(op: &FrameOperator<'_, T>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: ComplexVolume<T> = Array3::from_shape_fn(op.dims(), |_| {
        Complex::new(T::lit(rng.random_range(-1.0..1.0)), T::lit(rng.random_range(-1.0..1.0)))
    });
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let n = norm2(&v).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        v.mapv_inplace(|c| c.scale(T::lit(1.0 / n)));
        let av = op.normal(&v);
        lambda = dot(&v, &av);
        v = av;
    }
    lambda.max(f64::MIN_POSITIVE)
}
