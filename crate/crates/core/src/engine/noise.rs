use ndarray::Array2;
use num_complex::{Complex, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::volume::RealVolume;

/// How the phantom energy entering the noise variance is accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyConvention {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone)]
pub struct NoiseConfig {
    /// Input SNR; `f64::INFINITY` disables noise.
    pub snr: f64,
    /// Coil covariance, identity when `None`.
    pub sigma: Option<Array2<Complex64>>,
    pub seed: u64,
    pub energy: EnergyConvention,
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self {
            snr: f64::INFINITY,
            sigma: None,
            seed: 0,
            energy: EnergyConvention::Mean,
        }
    }

    pub fn white(snr: f64, seed: u64) -> Self {
        Self {
            snr,
            seed,
            ..Self::off()
        }
    }

    pub fn is_off(&self) -> bool {
        self.snr.is_infinite()
    }

    pub fn validate(&self, n_coils: usize) -> Result<()> {
        if !(self.snr > 0.0) {
            return Err(invalid(format!("SNR must be positive, got {}", self.snr)));
        }
        if let Some(s) = &self.sigma {
            psd_cholesky(s)?;
            if s.nrows() != n_coils {
                return Err(invalid(format!(
                    "noise covariance is {}x{}, expected {n_coils} coils",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        Ok(())
    }
}

/// Energy of the ideal phantom: mean (or sum) of `|mu|^2` over voxels.
pub fn phantom_energy<T: Real>(mu: &RealVolume<T>, convention: EnergyConvention) -> f64 {
    let sum: f64 = mu.iter().map(|v| v.as_f64().powi(2)).sum();
    match convention {
        EnergyConvention::Sum => sum,
        EnergyConvention::Mean if mu.is_empty() => 0.0,
        EnergyConvention::Mean => sum / mu.len() as f64,
    }
}

/// Lower-triangular `C` with `C C^H = sigma` for a Hermitian positive
/// semi-definite matrix. Zero pivots give zero columns.
pub fn psd_cholesky(sigma: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return Err(invalid("noise covariance must be a non-empty square matrix"));
    }
    let scale = sigma.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    if !scale.is_finite() {
        return Err(invalid("noise covariance has non-finite entries"));
    }
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..n {
            if (sigma[[i, j]] - sigma[[j, i]].conj()).norm() > tol {
                return Err(invalid("noise covariance is not Hermitian"));
            }
        }
    }
    let mut c = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut d = sigma[[j, j]].re;
        for k in 0..j {
            d -= c[[j, k]].norm_sqr();
        }
        if d < -1e-9 * scale {
            return Err(invalid("noise covariance is not positive semi-definite"));
        }
        let pivot = if d > 1e-12 * scale { d.sqrt() } else { 0.0 };
        c[[j, j]] = Complex64::new(pivot, 0.0);
        for i in j + 1..n {
            let mut v = sigma[[i, j]];
            for k in 0..j {
                v -= c[[i, k]] * c[[j, k]].conj();
            }
            if pivot == 0.0 {
                if v.norm() > 1e-9 * scale {
                    return Err(invalid("noise covariance is not positive semi-definite"));
                }
            } else {
                c[[i, j]] = v / pivot;
            }
        }
    }
    Ok(c)
}

/// Seeded correlated complex Gaussian noise source.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    factor: Array2<Complex64>,
    std: f64,
    seed: u64,
}

impl NoiseGenerator {
    /// `None` when noise is disabled.
    pub fn new(cfg: &NoiseConfig, n_coils: usize, energy: f64) -> Result<Option<Self>> {
        cfg.validate(n_coils)?;
        if cfg.is_off() {
            return Ok(None);
        }
        let factor = match &cfg.sigma {
            Some(s) => psd_cholesky(s)?,
            None => Array2::eye(n_coils),
        };
        Ok(Some(Self {
            factor,
            std: (energy / cfg.snr).sqrt(),
            seed: cfg.seed,
        }))
    }

    /// Adds noise to `[coil][sample]` data of one shot. The random stream
    /// depends only on the seed and `shot_index`.
    pub fn add<T: Real>(&self, samples: &mut [Vec<Complex<T>>], shot_index: u64) {
        let n_coils = self.factor.nrows();
        assert_eq!(samples.len(), n_coils, "one sample vector per coil expected");
        let n = samples.first().map_or(0, Vec::len);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(shot_index);
        let half = self.std * std::f64::consts::FRAC_1_SQRT_2;
        let mut z = vec![Complex64::default(); n_coils];
        for t in 0..n {
            for v in z.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *v = Complex64::new(re * half, im * half);
            }
            for (i, coil) in samples.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for k in 0..=i {
                    acc += self.factor[[i, k]] * z[k];
                }
                coil[t] += Complex::new(T::lit(acc.re), T::lit(acc.im));
            }
        }
    }
}

/// Adds noise in place; a no-op at infinite SNR.
pub fn add_noise<T: Real>(samples: &mut [Vec<Complex<T>>], cfg: &NoiseConfig, energy: f64, shot_index: u64) -> Result<()> {
    if let Some(g) = NoiseGenerator::new(cfg, samples.len(), energy)? {
        g.add(samples, shot_index);
    }
    Ok(())
}
