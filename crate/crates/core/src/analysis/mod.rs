//! GLM detection against the ground-truth ROI, plus image and signal quality metrics.

pub mod design;
pub mod glm;
pub mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::phantom::{Hrf, Paradigm};
use crate::volume::write_snkv;

pub use design::{build_design, gram_inverse, legendre, DesignMatrix};
pub use glm::{glm_fit, glm_fit_floored, t_to_z, StatMap, T_CAP};
pub use metrics::{bacc, precision_recall, psnr, ssim, threshold_detect, tsnr, z_threshold, Confusion, DetectionResult, PrCurve, PrPoint, TsnrResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub p_threshold: f64,
    pub drift_order: usize,
    pub hrf: Hrf,
    /// Voxels with tissue weight sum above this enter the confusion counts.
    pub mask_threshold: f64,
    /// Residual standard deviation floor relative to the voxel's temporal mean.
    pub sigma_floor: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            p_threshold: 0.001,
            drift_order: 1,
            hrf: Hrf::DoubleGamma,
            mask_threshold: 0.1,
            sigma_floor: 1e-4,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        z_threshold(self.p_threshold)?;
        if !(self.mask_threshold >= 0.0) {
            return Err(invalid("mask_threshold must be non-negative"));
        }
        if !(self.sigma_floor >= 0.0 && self.sigma_floor.is_finite()) {
            return Err(invalid("sigma_floor must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Headline numbers for one run. `None` marks an undefined value, explained in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_pr: f64,
    pub bacc: Option<f64>,
    pub psnr_first: Option<f64>,
    pub psnr_last: Option<f64>,
    pub ssim_first: f64,
    pub ssim_last: f64,
    pub tsnr_roi_mean: Option<f64>,
    pub p_threshold: f64,
    pub z_threshold: f64,
    pub confusion: Confusion,
    pub marker: Option<PrPoint>,
    pub dof: usize,
    pub n_frames: usize,
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::to_value(self)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub design: DesignMatrix,
    pub stats: StatMap,
    pub detection: DetectionResult,
    pub curve: PrCurve,
    pub tsnr: TsnrResult,
    pub report: MetricsReport,
}

/// Runs the GLM on magnitude frames and scores it against `roi`.
/// `reference` is the ideal contrast image used for PSNR/SSIM.
pub fn analyze(
    series: &[Array3<f64>],
    tr_vol: f64,
    paradigm: &Paradigm,
    roi: &Array3<f64>,
    mask: Option<&Array3<bool>>,
    reference: &Array3<f64>,
    config: &AnalysisConfig,
) -> Result<Analysis> {
    config.validate()?;
    if series.is_empty() {
        return Err(invalid("empty series"));
    }
    let design = build_design(paradigm, config.hrf, series.len(), tr_vol, config.drift_order)?;
    let stats = glm_fit_floored(series, &design, config.sigma_floor)?;
    let detection = threshold_detect(&stats.z, roi, mask, config.p_threshold)?;
    let curve = precision_recall(&stats.z, roi, mask, Some(config.p_threshold))?;
    let ts = tsnr(series, roi)?;
    let mut flags = Vec::new();
    let bacc = match bacc(&detection.counts) {
        Ok(v) => Some(v),
        Err(e) => {
            flags.push(format!("bacc: {e}"));
            None
        }
    };
    let mut finite = |name: &str, v: f64| {
        if v.is_finite() {
            Some(v)
        } else {
            flags.push(format!("{name}: identical to reference"));
            None
        }
    };
    let last = &series[series.len() - 1];
    let psnr_first = finite("psnr_first", psnr(&series[0], reference)?);
    let psnr_last = finite("psnr_last", psnr(last, reference)?);
    if ts.n_flagged > 0 {
        flags.push(format!("tsnr: {} voxels with zero temporal variance", ts.n_flagged));
    }
    if stats.n_flagged() > 0 {
        flags.push(format!("glm: {} voxels with zero variance", stats.n_flagged()));
    }
    let report = MetricsReport {
        auc_pr: curve.auc,
        bacc,
        psnr_first,
        psnr_last,
        ssim_first: ssim(&series[0], reference)?,
        ssim_last: ssim(last, reference)?,
        tsnr_roi_mean: ts.roi_mean,
        p_threshold: config.p_threshold,
        z_threshold: detection.z_threshold,
        confusion: detection.counts,
        marker: curve.marker,
        dof: stats.dof,
        n_frames: series.len(),
        flags,
    };
    Ok(Analysis {
        design,
        stats,
        detection,
        curve,
        tsnr: ts,
        report,
    })
}

impl Analysis {
    /// Writes the z map and beta map as SNKV1, the PR curve as CSV and the report as JSON.
    pub fn save(&self, dir: &Path, voxel_size: [f64; 3]) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let vs = voxel_size.map(|v| v as f32);
        let z = dir.join("zmap.snkv");
        write_snkv(&z, &self.stats.z.mapv(|v| v as f32), vs)?;
        let beta = dir.join("beta.snkv");
        write_snkv(&beta, &self.stats.beta.mapv(|v| v as f32), vs)?;
        let pr = dir.join("pr_curve.csv");
        fs::write(&pr, self.curve.to_csv())?;
        let metrics = dir.join("metrics.json");
        fs::write(&metrics, self.report.to_canonical_json()?)?;
        Ok(vec![z, beta, pr, metrics])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_series_scores_one() {
        let n = 40;
        let tr = 2.0;
        let p = Paradigm::block(10.0, 10.0, n as f64 * tr).unwrap();
        let d = build_design(&p, Hrf::DoubleGamma, n, tr, 1).unwrap();
        let task = d.task_column();
        let roi = Array3::from_shape_fn([4, 4, 4], |(i, _, _)| if i < 2 { 1.0 } else { 0.0 });
        let mut k = 0u64;
        let series: Vec<Array3<f64>> = task
            .iter()
            .map(|&v| {
                Array3::from_shape_fn([4, 4, 4], |(i, j, l)| {
                    k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let wobble = ((k >> 33) as f64 / 2f64.powi(31) - 0.5) * 1e-3;
                    10.0 + (i + j + l) as f64 + if i < 2 { v } else { 0.0 } + wobble
                })
            })
            .collect();
        let reference = Array3::from_shape_fn([4, 4, 4], |(i, j, l)| 10.0 + (i + j + l) as f64);
        let a = analyze(&series, tr, &p, &roi, None, &reference, &AnalysisConfig::default()).unwrap();
        assert_eq!(a.report.bacc, Some(1.0));
        assert_eq!(a.report.auc_pr, 1.0);
        assert!(a.report.psnr_first.unwrap() > 10.0);
        let json = a.report.to_canonical_json().unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a.report);
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(a.save(dir.path(), [3.0; 3]).unwrap().len(), 4);
    }
}
