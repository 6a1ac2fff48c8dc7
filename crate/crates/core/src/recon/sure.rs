//! Per-frame regularization weight from the finest diagonal wavelet details.

use crate::error::Result;
use crate::scalar::Real;
use crate::volume::ComplexVolume;

use super::wavelet::WaveletBasis;

const MAD_FACTOR: f64 = 0.675;
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SureEstimate {
    /// Threshold in noise-normalized units.
    pub normalized: f64,
    /// Noise level estimate in coefficient units.
    pub sigma: f64,
    pub n: usize,
}

impl SureEstimate {
    /// Threshold in coefficient units.
    pub fn mu(&self) -> f64 {
        self.normalized * self.sigma
    }
}

pub fn universal_threshold(n: usize) -> f64 {
    (2.0 * (n as f64).log2()).sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation around the median.
pub fn mad(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev)
}

/// `sum_i min(a_i^2, w^2) - 2 * #{a_i^2 < w^2}`.
pub fn sure_objective(alpha: &[f64], w: f64) -> f64 {
    let w2 = w * w;
    alpha
        .iter()
        .map(|a| {
            let a2 = a * a;
            a2.min(w2) - if a2 < w2 { 2.0 } else { 0.0 }
        })
        .sum()
}

/// Smallest `|a_i|` minimizing [`sure_objective`], in `O(n log n)`.
pub fn sure_minimizer(alpha: &[f64]) -> f64 {
    let mut sq: Vec<f64> = alpha.iter().map(|a| a * a).collect();
    sq.sort_by(f64::total_cmp);
    let n = sq.len();
    let mut best = (f64::INFINITY, 0.0);
    let mut prefix = 0.0;
    let mut first_equal = 0;
    for k in 0..n {
        if k > 0 && sq[k] != sq[k - 1] {
            first_equal = k;
        }
        prefix += sq[k];
        // values above index k are >= sq[k]; ties past k contribute sq[k] either way
        let obj = prefix + (n - 1 - k) as f64 * sq[k] - 2.0 * first_equal as f64;
        if obj < best.0 {
            best = (obj, sq[k].sqrt());
        }
    }
    best.1
}

/// Threshold selection on already normalized coefficients.
pub fn sure_normalized(alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let cap = universal_threshold(n);
    let energy = alpha.iter().map(|a| a * a).sum::<f64>() / n as f64;
    if energy < (n as f64).log2().powf(1.5) / (n as f64).sqrt() {
        cap
    } else {
        sure_minimizer(alpha).min(cap)
    }
}

/// Estimates the regularization weight of a frame from its current estimate.
///
/// Real and imaginary parts of the finest HHH subband are pooled.
pub fn sure_threshold<T: Real>(x: &ComplexVolume<T>, basis: &WaveletBasis) -> Result<SureEstimate> {
    let coeffs = basis.forward_complex(x)?;
    let hhh = basis.finest_diagonal(&coeffs);
    let alpha: Vec<f64> = hhh
        .iter()
        .flat_map(|c| [c.re.as_f64(), c.im.as_f64()])
        .collect();
    let n = alpha.len();
    let peak = coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm().as_f64()));
    let floor = SIGMA_FLOOR * peak;
    let sigma = mad(&alpha) * MAD_FACTOR;
    if !(sigma > floor) {
        return Ok(SureEstimate {
            normalized: universal_threshold(n),
            sigma: floor,
            n,
        });
    }
    let normalized: Vec<f64> = alpha.iter().map(|a| a / sigma).collect();
    Ok(SureEstimate {
        normalized: sure_normalized(&normalized),
        sigma,
        n,
    })
}
