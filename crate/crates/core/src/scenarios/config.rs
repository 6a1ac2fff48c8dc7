use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::engine::{EnergyConvention, SignalModel};
use crate::error::{Error, Result};
use crate::phantom::{Event, Hrf, Paradigm, SequenceParams, TissueParams};
use crate::recon::ReconConfig;
use crate::trajectories::StackOfSpiralsSpec;
use crate::volume::Dims;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Tissue parameters in scanner units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueSpec {
    pub name: String,
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub t2s_ms: f64,
    pub rho: f64,
    #[serde(default)]
    pub chi: f64,
}

impl TissueSpec {
    pub fn to_params(&self) -> Result<TissueParams> {
        TissueParams::from_ms(&self.name, self.t1_ms, self.t2_ms, self.t2s_ms, self.rho, self.chi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomConfig {
    /// Sphere-built brain with white matter, gray matter, CSF and an
    /// extra gray-matter sphere at the activation centre.
    Synthetic { dims: Dims, voxel_size_mm: [f64; 3] },
    /// Fuzzy tissue maps keyed by tissue name (NIfTI-1 or SNKV1).
    Files {
        volumes: BTreeMap<String, PathBuf>,
        #[serde(default)]
        tissues: Option<Vec<TissueSpec>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub tr_shot_ms: f64,
    pub te_ms: f64,
    pub flip_angle_deg: f64,
    pub t_obs_ms: f64,
    #[serde(default = "default_dwell")]
    pub dwell_us: f64,
}

fn default_dwell() -> f64 {
    10.0
}

impl SequenceConfig {
    pub fn params(&self) -> Result<SequenceParams> {
        SequenceParams::from_ms(self.tr_shot_ms, self.te_ms, self.flip_angle_deg, self.t_obs_ms, self.dwell_us)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryConfig {
    #[serde(rename = "epi_3d")]
    Epi3d {
        /// Planes acquired per frame; all of them when absent.
        #[serde(default)]
        planes_per_frame: Option<usize>,
    },
    StackOfSpirals {
        n_samples: usize,
        n_turns: f64,
        #[serde(default = "yes")]
        in_out: bool,
        af: f64,
        center_fraction: f64,
        #[serde(default)]
        dynamic: bool,
        #[serde(default)]
        outer_planes: Option<usize>,
    },
    /// One frame read from an SNKT1 file and repeated for every frame.
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

impl TrajectoryConfig {
    pub fn sos_spec(&self, n_frames: usize) -> Option<StackOfSpiralsSpec> {
        match *self {
            TrajectoryConfig::StackOfSpirals {
                n_samples,
                n_turns,
                in_out,
                af,
                center_fraction,
                dynamic,
                outer_planes,
            } => Some(StackOfSpiralsSpec {
                n_samples,
                n_turns,
                in_out,
                af,
                center_fraction,
                dynamic,
                n_frames,
                outer_planes,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParadigmConfig {
    Block { on_s: f64, off_s: f64 },
    Events { events: Vec<Event> },
    Rest,
}

impl Default for ParadigmConfig {
    fn default() -> Self {
        ParadigmConfig::Block { on_s: 20.0, off_s: 20.0 }
    }
}

impl ParadigmConfig {
    pub fn build(&self, run_length: f64) -> Result<Paradigm> {
        match self {
            ParadigmConfig::Block { on_s, off_s } => Paradigm::block(*on_s, *off_s, run_length),
            ParadigmConfig::Events { events } => Paradigm::new(events.clone(), run_length),
            ParadigmConfig::Rest => Ok(Paradigm::empty(run_length)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoldConfig {
    pub delta_r2s_hz: f64,
    /// Ellipsoid centre as a fraction of each axis (0 first voxel, 1 last).
    pub roi_center: [f64; 3],
    /// Ellipsoid semi-axes as a fraction of each axis length.
    pub roi_semi_axes: [f64; 3],
    pub min_fraction: f64,
    pub hrf: Hrf,
}

impl Default for BoldConfig {
    fn default() -> Self {
        Self {
            delta_r2s_hz: -1.0,
            roi_center: [0.5, 0.25, 0.5],
            roi_semi_axes: [0.2, 0.15, 0.2],
            min_fraction: 0.5,
            hrf: Hrf::DoubleGamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilConfig {
    pub n_coils: usize,
}

impl Default for CoilConfig {
    fn default() -> Self {
        Self { n_coils: 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Input SNR; no noise when absent.
    pub snr: Option<f64>,
    pub energy: EnergyConvention,
}

fn default_name() -> String {
    "run".into()
}

fn default_frames() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    /// Worker threads, 0 for all cores.
    #[serde(default)]
    pub n_jobs: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_frames")]
    pub n_frames: usize,
    pub phantom: PhantomConfig,
    pub sequence: SequenceConfig,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub paradigm: ParadigmConfig,
    #[serde(default)]
    pub bold: BoldConfig,
    #[serde(default)]
    pub coils: CoilConfig,
    #[serde(default)]
    pub model: SignalModel,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_yaml_str(text: &str) -> Result<Self> {
        let c: Self = serde_yaml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Parses and validates a config file; relative paths inside resolve
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut c: Self = serde_yaml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            c.resolve_paths(base);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PhantomConfig::Files { volumes, .. } = &mut self.phantom {
            volumes.values_mut().for_each(fix);
        }
        if let TrajectoryConfig::File { path } = &mut self.trajectory {
            fix(path);
        }
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let wrap = |what: &str, e: Error| cfg_err(format!("{what}: {e}"));
        self.sequence.params().map_err(|e| wrap("sequence", e))?;
        if self.n_frames == 0 {
            return Err(cfg_err("n_frames must be positive"));
        }
        if self.n_frames < self.analysis.drift_order + 3 {
            return Err(cfg_err(format!(
                "n_frames = {} is too short for a GLM with drift order {}",
                self.n_frames, self.analysis.drift_order
            )));
        }
        match &self.phantom {
            PhantomConfig::Synthetic { dims, voxel_size_mm } => {
                if dims.iter().any(|&d| d < 4) {
                    return Err(cfg_err(format!("phantom dims {dims:?}: every axis needs at least 4 voxels")));
                }
                if voxel_size_mm.iter().any(|&v| !(v > 0.0)) {
                    return Err(cfg_err("voxel sizes must be positive"));
                }
                if let TrajectoryConfig::Epi3d { planes_per_frame: Some(p) } = self.trajectory {
                    if p == 0 || p > dims[2] {
                        return Err(cfg_err(format!("planes_per_frame = {p} outside 1..={}", dims[2])));
                    }
                }
            }
            PhantomConfig::Files { volumes, tissues } => {
                if volumes.is_empty() {
                    return Err(cfg_err("phantom.volumes is empty"));
                }
                if let Some(ts) = tissues {
                    for t in ts {
                        t.to_params().map_err(|e| wrap("phantom.tissues", e))?;
                    }
                }
            }
        }
        match &self.trajectory {
            TrajectoryConfig::StackOfSpirals { n_samples, n_turns, af, center_fraction, .. } => {
                if *n_samples < 2 || !(*n_turns > 0.0) {
                    return Err(cfg_err("spiral needs at least 2 samples and a positive number of turns"));
                }
                if !(*af >= 1.0) || !(*center_fraction > 0.0 && *center_fraction < 1.0) {
                    return Err(cfg_err("stack of spirals needs af >= 1 and center_fraction in (0, 1)"));
                }
            }
            TrajectoryConfig::Epi3d { planes_per_frame: Some(0) } => return Err(cfg_err("planes_per_frame must be positive")),
            _ => {}
        }
        if self.coils.n_coils == 0 {
            return Err(cfg_err("n_coils must be at least 1"));
        }
        if let Some(snr) = self.noise.snr {
            if !(snr > 0.0 && snr.is_finite()) {
                return Err(cfg_err("noise.snr must be positive"));
            }
        }
        let b = &self.bold;
        if !b.delta_r2s_hz.is_finite() || b.roi_semi_axes.iter().any(|&a| !(a > 0.0)) || !(0.0..=1.0).contains(&b.min_fraction) {
            return Err(cfg_err("bold: finite delta_r2s_hz, positive semi-axes and min_fraction in [0, 1] required"));
        }
        if let ParadigmConfig::Block { on_s, off_s } = self.paradigm {
            if !(on_s > 0.0 && off_s >= 0.0) {
                return Err(cfg_err("paradigm block lengths must be positive"));
            }
        }
        self.recon.validate().map_err(|e| wrap("recon", e))?;
        self.analysis.validate().map_err(|e| wrap("analysis", e))?;
        Ok(())
    }

    /// Canonical JSON of everything that determines the results (worker
    /// count and output location excluded).
    pub fn canonical_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.n_jobs = 0;
        c.output_dir = None;
        c.recon.n_jobs = 0;
        Ok(serde_json::to_string(&serde_json::to_value(&c)?)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(crate::engine::sha256_hex(self.canonical_json()?.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
n_frames: 20
phantom:
  kind: synthetic
  dims: [8, 8, 8]
  voxel_size_mm: [3, 3, 3]
sequence:
  tr_shot_ms: 50
  te_ms: 25
  flip_angle_deg: 12
  t_obs_ms: 25
trajectory:
  kind: epi_3d
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_yaml_str(MINIMAL).unwrap();
        assert_eq!(c.coils.n_coils, 1);
        assert_eq!(c.paradigm, ParadigmConfig::Block { on_s: 20.0, off_s: 20.0 });
        assert_eq!(c.analysis.p_threshold, 0.001);
        let again = RunConfig::from_yaml_str(&c.to_yaml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_yaml_str(&format!("{MINIMAL}bogus: 1\n")).is_err());
        let nested = MINIMAL.replace("  t_obs_ms: 25", "  t_obs_ms: 25\n  extra: 3");
        assert!(RunConfig::from_yaml_str(&nested).is_err());
        let tagged = MINIMAL.replace("  kind: epi_3d", "  kind: epi_3d\n  turns: 3");
        assert!(RunConfig::from_yaml_str(&tagged).is_err());
    }

    #[test]
    fn te_above_tr_rejected() {
        let bad = MINIMAL.replace("te_ms: 25", "te_ms: 60");
        let e = RunConfig::from_yaml_str(&bad).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("TE")), "{e}");
    }

    #[test]
    fn hash_ignores_workers() {
        let a = RunConfig::from_yaml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.n_jobs = 3;
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
