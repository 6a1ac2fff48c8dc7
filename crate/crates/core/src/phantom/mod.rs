//! Tissue-decomposed anatomical phantom, GRE steady-state contrast and the
//! BOLD modulation applied to gray matter between shots.

pub mod hrf;

use std::path::PathBuf;

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::volume::{dims_of, read_any, Dims, RealVolume};

pub use hrf::{build_bold_timecourse, Event, Hrf, Paradigm};

/// Slack on the per-voxel tissue fraction sum.
pub const WEIGHT_SUM_EPS: f64 = 1e-6;

/// MR parameters of one tissue class. Times are stored in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    pub name: String,
    pub t1: f64,
    pub t2: f64,
    pub t2_star: f64,
    pub rho: f64,
    /// Stored only; no model in this crate consumes susceptibility.
    pub chi: f64,
}

impl TissueParams {
    pub fn from_ms(name: &str, t1: f64, t2: f64, t2_star: f64, rho: f64, chi: f64) -> Result<Self> {
        let t = Self {
            name: name.to_string(),
            t1: t1 * 1e-3,
            t2: t2 * 1e-3,
            t2_star: t2_star * 1e-3,
            rho,
            chi,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t1 > 0.0
            && self.t2_star > 0.0
            && self.t2_star <= self.t2
            && self.t2 <= self.t1
            && self.rho > 0.0
            && self.rho <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "tissue `{}` violates 0 < T2* <= T2 <= T1, 0 < rho <= 1",
                self.name
            )))
        }
    }

    /// 7T white matter.
    pub fn white_matter() -> Self {
        Self::from_ms("WM", 1200.0, 57.0, 27.0, 0.77, -9.08).unwrap()
    }

    /// 7T gray matter.
    pub fn gray_matter() -> Self {
        Self::from_ms("GM", 1800.0, 49.0, 28.0, 0.86, -9.05).unwrap()
    }

    /// 7T cerebrospinal fluid.
    pub fn csf() -> Self {
        Self::from_ms("CSF", 3730.0, 1010.0, 1010.0, 1.0, -9.05).unwrap()
    }

    pub fn brain_set() -> Vec<Self> {
        vec![Self::white_matter(), Self::gray_matter(), Self::csf()]
    }
}

/// GRE sequence timing. Times in seconds, flip angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub tr_shot: f64,
    pub te: f64,
    pub flip_angle: f64,
    pub t_obs: f64,
    pub dwell_time: f64,
}

impl SequenceParams {
    /// Builds from scanner units: ms for TR/TE/T_obs, µs for the dwell time.
    pub fn from_ms(tr_shot: f64, te: f64, flip_angle: f64, t_obs: f64, dwell_us: f64) -> Result<Self> {
        let s = Self {
            tr_shot: tr_shot * 1e-3,
            te: te * 1e-3,
            flip_angle,
            t_obs: t_obs * 1e-3,
            dwell_time: dwell_us * 1e-6,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.te > 0.0 && self.te < self.tr_shot) {
            return Err(invalid(format!(
                "TE ({} s) must lie in (0, TR_shot = {} s)",
                self.te, self.tr_shot
            )));
        }
        if !(self.t_obs > 0.0 && self.t_obs <= self.tr_shot) {
            return Err(invalid("T_obs must lie in (0, TR_shot]"));
        }
        if !(self.dwell_time > 0.0) {
            return Err(invalid("dwell time must be positive"));
        }
        Ok(())
    }
}

/// Per-tissue fuzzy fraction volumes plus tissue parameters.
#[derive(Debug, Clone)]
pub struct Phantom<T: Real = f64> {
    pub dims: Dims,
    /// Millimetres per axis.
    pub voxel_size: [f64; 3],
    pub tissues: Vec<TissueParams>,
    pub weights: Vec<RealVolume<T>>,
}

impl<T: Real> Phantom<T> {
    pub fn new(voxel_size: [f64; 3], tissues: Vec<TissueParams>, weights: Vec<RealVolume<T>>) -> Result<Self> {
        if tissues.len() != weights.len() || tissues.is_empty() {
            return Err(invalid("one weight volume per tissue is required"));
        }
        let dims = dims_of(&weights[0]);
        for t in &tissues {
            t.validate()?;
        }
        let p = Self {
            dims,
            voxel_size,
            tissues,
            weights,
        };
        p.check_weights()?;
        Ok(p)
    }

    pub fn n_tissues(&self) -> usize {
        self.tissues.len()
    }

    pub fn tissue_index(&self, name: &str) -> Option<usize> {
        self.tissues
            .iter()
            .position(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Checks `w_i in [0,1]`, shared dims and the per-voxel sum bound.
    pub fn check_weights(&self) -> Result<()> {
        for w in &self.weights {
            if dims_of(w) != self.dims {
                return Err(Error::Shape("weight volumes must share dims".into()));
            }
            if w.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(invalid("tissue weights must lie in [0, 1]"));
            }
        }
        let total = self.weight_sum();
        for ((x, y, z), &s) in total.indexed_iter() {
            if s.as_f64() > 1.0 + WEIGHT_SUM_EPS {
                return Err(Error::WeightSum {
                    voxel: [x, y, z],
                    sum: s.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn weight_sum(&self) -> RealVolume<T> {
        let mut total = Array3::<T>::zeros(self.dims);
        for w in &self.weights {
            total += w;
        }
        total
    }

    /// Combined contrast `sum_i mu_i w_i`.
    pub fn contrast_volume(&self, mu: &[T]) -> RealVolume<T> {
        let mut out = Array3::<T>::zeros(self.dims);
        for (w, &m) in self.weights.iter().zip(mu) {
            out.scaled_add(m, w);
        }
        out
    }

    /// Per-tissue contrast volumes `mu_i w_i`.
    pub fn tissue_volumes(&self, mu: &[T]) -> Vec<RealVolume<T>> {
        self.weights.iter().zip(mu).map(|(w, &m)| w * m).collect()
    }
}

/// Loads per-tissue fraction volumes (NIfTI-1 float32 or SNKV1).
///
/// Each entry of `volume_files` pairs a tissue label from `tissue_table`
/// with a file path. Values are clamped to `[0, 1]`.
pub fn load_phantom<T: Real>(volume_files: &[(String, PathBuf)], tissue_table: &[TissueParams]) -> Result<Phantom<T>> {
    if volume_files.is_empty() {
        return Err(invalid("no tissue volumes given"));
    }
    let mut tissues = Vec::with_capacity(volume_files.len());
    let mut weights = Vec::with_capacity(volume_files.len());
    let mut reference: Option<(Dims, [f32; 3])> = None;
    for (label, path) in volume_files {
        let params = tissue_table
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(label))
            .ok_or_else(|| Error::UnknownTissue(label.clone()))?;
        let vol = read_any(path)?;
        let dims = dims_of(&vol.data);
        match reference {
            None => reference = Some((dims, vol.voxel_size)),
            Some((d, vs)) => {
                if d != dims {
                    return Err(Error::DimensionMismatch {
                        path: path.clone(),
                        expected: d,
                        found: dims,
                    });
                }
                if vs != vol.voxel_size {
                    return Err(Error::Shape(format!(
                        "{}: voxel size {:?} differs from {:?}",
                        path.display(),
                        vol.voxel_size,
                        vs
                    )));
                }
            }
        }
        tissues.push(params.clone());
        weights.push(vol.data.mapv(|v| T::lit(v.clamp(0.0, 1.0) as f64)));
    }
    let (_, vs) = reference.unwrap();
    Phantom::new(vs.map(f64::from), tissues, weights)
}

/// A sphere in voxel coordinates painted with one tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub tissue: usize,
}

const SUPERSAMPLE: usize = 4;

/// Deterministic fuzzy phantom made of spheres.
///
/// Each voxel is supersampled on a 4x4x4 grid; a subsample takes the tissue
/// of the last sphere containing it, and the weight of a tissue is the
/// fraction of subsamples it owns. Returns the phantom plus warnings.
pub fn synthetic_phantom<T: Real>(
    dims: Dims,
    voxel_size: [f64; 3],
    tissues: Vec<TissueParams>,
    spheres: &[Sphere],
) -> Result<(Phantom<T>, Vec<String>)> {
    if dims.iter().any(|&d| d == 0) {
        return Err(invalid("phantom dims must be non-zero"));
    }
    let mut warnings = Vec::new();
    for (i, s) in spheres.iter().enumerate() {
        if s.tissue >= tissues.len() {
            return Err(invalid(format!("sphere {i}: tissue index {} out of range", s.tissue)));
        }
        let fits = (0..3).all(|a| s.center[a] - s.radius >= -0.5 && s.center[a] + s.radius <= dims[a] as f64 - 0.5);
        if !fits || s.radius <= 0.0 {
            return Err(invalid(format!("sphere {i} does not fit inside {dims:?}")));
        }
    }
    if spheres.is_empty() {
        let msg = "synthetic phantom has no spheres: all weights are zero".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let n_sub = (SUPERSAMPLE * SUPERSAMPLE * SUPERSAMPLE) as f64;
    let offsets: Vec<f64> = (0..SUPERSAMPLE)
        .map(|a| (a as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5)
        .collect();
    let mut weights = vec![Array3::<T>::zeros(dims); tissues.len()];
    let mut counts = vec![0usize; tissues.len()];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                counts.iter_mut().for_each(|c| *c = 0);
                for &ox in &offsets {
                    for &oy in &offsets {
                        for &oz in &offsets {
                            let p = [x as f64 + ox, y as f64 + oy, z as f64 + oz];
                            let owner = spheres.iter().rev().find(|s| {
                                let d2: f64 = (0..3).map(|a| (p[a] - s.center[a]).powi(2)).sum();
                                d2 <= s.radius * s.radius
                            });
                            if let Some(s) = owner {
                                counts[s.tissue] += 1;
                            }
                        }
                    }
                }
                for (w, &c) in weights.iter_mut().zip(&counts) {
                    w[[x, y, z]] = T::lit(c as f64 / n_sub);
                }
            }
        }
    }
    Ok((Phantom::new(voxel_size, tissues, weights)?, warnings))
}

/// Steady-state spoiled GRE contrast of each tissue at `t = TE`.
pub fn gre_contrast<T: Real>(phantom: &Phantom<T>, seq: &SequenceParams) -> Vec<T> {
    phantom
        .tissues
        .iter()
        .map(|t| T::lit(tissue_contrast(t, seq)))
        .collect()
}

pub fn tissue_contrast(t: &TissueParams, seq: &SequenceParams) -> f64 {
    let alpha = seq.flip_angle.to_radians();
    let e1 = (-seq.tr_shot / t.t1).exp();
    t.rho * alpha.sin() * (1.0 - e1) / (1.0 - alpha.cos() * e1) * (-seq.te / t.t2_star).exp()
}

/// Time-varying BOLD description for one activated tissue.
#[derive(Debug, Clone)]
pub struct BoldSpec<T: Real = f64> {
    pub roi: RealVolume<T>,
    /// Change in R2* during activation, Hz.
    pub delta_r2s: f64,
    /// Normalized response sampled at each shot of the run.
    pub h_tilde: Vec<f64>,
    /// Index of the modulated tissue (gray matter).
    pub tissue: usize,
}

impl<T: Real> BoldSpec<T> {
    pub fn inactive(dims: Dims, n_shots: usize, tissue: usize) -> Self {
        Self {
            roi: Array3::zeros(dims),
            delta_r2s: 0.0,
            h_tilde: vec![0.0; n_shots],
            tissue,
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        if dims_of(&self.roi) != dims {
            return Err(Error::Shape("ROI dims differ from the phantom".into()));
        }
        if self.roi.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(invalid("ROI weights must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `1 - TE * dR2* * h * roi`, with TE in seconds and dR2* in Hz.
#[inline]
pub fn modulation_factor(te: f64, delta_r2s: f64, h: f64, roi: f64) -> f64 {
    1.0 - te * delta_r2s * h * roi
}

/// Applies the BOLD change of shot `shot_index` to a gray-matter contrast volume.
pub fn bold_modulate<T: Real>(mu_gm: &RealVolume<T>, bold: &BoldSpec<T>, te: f64, shot_index: usize) -> RealVolume<T> {
    let h = bold.h_tilde.get(shot_index).copied().unwrap_or(0.0);
    let mut out = mu_gm.clone();
    if h == 0.0 || bold.delta_r2s == 0.0 {
        return out;
    }
    let scale = T::lit(te * bold.delta_r2s * h);
    Zip::from(&mut out).and(&bold.roi).for_each(|m, &r| {
        if r != T::zero() {
            *m *= T::one() - scale * r;
        }
    });
    out
}

/// Activation ROI: gray-matter fraction inside an axis-aligned ellipsoid.
///
/// `center` and `semi_axes` are in voxel units. Voxels whose tissue fraction
/// is below `min_fraction` are left out so the activated support coincides
/// with the binarized ground truth.
pub fn ellipsoid_roi<T: Real>(
    phantom: &Phantom<T>,
    tissue: usize,
    center: [f64; 3],
    semi_axes: [f64; 3],
    min_fraction: f64,
) -> Result<RealVolume<T>> {
    let w = phantom
        .weights
        .get(tissue)
        .ok_or_else(|| invalid(format!("tissue index {tissue} out of range")))?;
    if semi_axes.iter().any(|&a| a <= 0.0) {
        return Err(invalid("ellipsoid semi-axes must be positive"));
    }
    Ok(Array3::from_shape_fn(phantom.dims, |(x, y, z)| {
        let p = [x as f64, y as f64, z as f64];
        let r2: f64 = (0..3).map(|a| ((p[a] - center[a]) / semi_axes[a]).powi(2)).sum();
        let v = w[[x, y, z]];
        if r2 <= 1.0 && v.as_f64() >= min_fraction {
            v
        } else {
            T::zero()
        }
    }))
}
