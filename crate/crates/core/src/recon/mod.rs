//! Frame-wise reconstruction: density-compensated adjoint and
//! wavelet-sparse POGM with SURE-driven regularization.

pub mod operator;
pub mod solver;
pub mod sure;
pub mod wavelet;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{resolve_jobs, CoilProfile, KSpaceDataset};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::trajectories::{KPoint, Shot};
use crate::volume::{magnitude, read_snkv, voxel_count, write_snkv, ComplexVolume, Dims};

pub use operator::{FrameData, FrameOperator};
pub use solver::{CsProblem, FrameEstimate, SolverOptions};
pub use sure::{sure_threshold, SureEstimate};
pub use wavelet::{soft_threshold, WaveletBasis, WaveletFamily};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Cold,
    Warm,
    Refined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMethod {
    Adjoint,
    #[default]
    Cs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    #[default]
    Sure,
    Fixed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityComp {
    #[default]
    None,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub method: ReconMethod,
    pub strategy: Strategy,
    pub max_iters: usize,
    pub tol: f64,
    pub mu_mode: MuMode,
    /// Regularization weight used when `mu_mode` is `fixed`.
    pub mu: f64,
    pub density_comp: DensityComp,
    pub wavelet: WaveletBasis,
    /// Worker threads, 0 for all cores.
    pub n_jobs: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            method: ReconMethod::Cs,
            strategy: Strategy::Cold,
            max_iters: 30,
            tol: 1e-4,
            mu_mode: MuMode::Sure,
            mu: 0.0,
            density_comp: DensityComp::None,
            wavelet: WaveletBasis::default(),
            n_jobs: 0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid("regularization weight must be finite and non-negative"));
        }
        if self.wavelet.levels == 0 {
            return Err(invalid("at least one wavelet level is required"));
        }
        Ok(())
    }

    fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

/// Density weights `|k|^(d-1)` over the `d` axes the readout moves along,
/// normalized to sum to the sample count. Samples at `k = 0` take the mean
/// weight of their neighbours in the readout.
pub fn radial_density_weights(points: &[KPoint]) -> Vec<f64> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let moving: Vec<usize> = (0..3)
        .filter(|&a| points.iter().any(|p| p[a] != points[0][a]))
        .collect();
    let d = moving.len();
    if d <= 1 {
        return vec![1.0; n];
    }
    let radius = |p: &KPoint| moving.iter().map(|&a| p[a] * p[a]).sum::<f64>().sqrt();
    let mut w: Vec<f64> = points.iter().map(|p| radius(p).powi(d as i32 - 1)).collect();
    for i in 0..n {
        if w[i] == 0.0 {
            let neigh: Vec<f64> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
                .into_iter()
                .flatten()
                .map(|j| w[j])
                .filter(|&v| v > 0.0)
                .collect();
            if !neigh.is_empty() {
                w[i] = neigh.iter().sum::<f64>() / neigh.len() as f64;
            }
        }
    }
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return vec![1.0; n];
    }
    w.iter().map(|v| v * n as f64 / total).collect()
}

/// `(1/M) sum_l conj(S_l) F^H (w y_l)`; a full Cartesian frame gives the inverse FFT.
pub fn adjoint_recon<T: Real>(kdata: &FrameData<T>, shots: &[Shot], coils: &CoilProfile<T>, density: DensityComp) -> Result<ComplexVolume<T>> {
    let op = FrameOperator::new(shots, coils);
    op.check_data(kdata)?;
    let weights: Option<Vec<Vec<T>>> = match density {
        DensityComp::None => None,
        DensityComp::Radial => Some(
            shots
                .iter()
                .map(|s| radial_density_weights(&s.points).into_iter().map(T::lit).collect())
                .collect(),
        ),
    };
    let mut x = op.adjoint_weighted(kdata, weights.as_deref());
    let scale = T::one() / T::lit(voxel_count(op.dims()) as f64).sqrt();
    x.mapv_inplace(|v| v.scale(scale));
    Ok(x)
}

/// Converts stored samples to the unitary scaling used by [`FrameOperator`].
pub fn scaled_frame<T: Real>(frame: &[Vec<Vec<Complex<f32>>>], dims: Dims) -> FrameData<T> {
    let s = 1.0 / (voxel_count(dims) as f64).sqrt();
    frame
        .iter()
        .map(|c| {
            c.iter()
                .map(|shot| shot.iter().map(|v| Complex::new(T::lit(v.re as f64 * s), T::lit(v.im as f64 * s))).collect())
                .collect()
        })
        .collect()
}

fn raw_frame<T: Real>(frame: &[Vec<Vec<Complex<f32>>>]) -> FrameData<T> {
    frame
        .iter()
        .map(|c| {
            c.iter()
                .map(|shot| shot.iter().map(|v| Complex::new(T::lit(v.re as f64), T::lit(v.im as f64))).collect())
                .collect()
        })
        .collect()
}

/// Solves one frame from `init`; `mu` is estimated on `init` when not fixed.
pub fn cs_solve<T: Real>(
    kdata: &FrameData<T>,
    shots: &[Shot],
    coils: &CoilProfile<T>,
    basis: &WaveletBasis,
    config: &ReconConfig,
    init: Option<&ComplexVolume<T>>,
) -> Result<FrameEstimate<T>> {
    let op = FrameOperator::new(shots, coils);
    let problem = CsProblem::new(&op, kdata)?;
    let start = init.unwrap_or(problem.adjoint_data());
    let mu = match config.mu_mode {
        MuMode::Fixed => config.mu,
        MuMode::Sure => {
            let pdims = basis.padded_dims(op.dims());
            sure_threshold(&pad_to(start, pdims), basis)?.mu()
        }
    };
    problem.solve(start, mu, basis, config.options())
}

fn pad_to<T: Real>(x: &ComplexVolume<T>, to: Dims) -> ComplexVolume<T> {
    let d = crate::volume::dims_of(x);
    if d == to {
        return x.clone();
    }
    let mut out = Array3::zeros(to);
    out.slice_mut(ndarray::s![..d[0], ..d[1], ..d[2]]).assign(x);
    out
}

/// Where a frame's starting point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    Adjoint,
    /// Output of `frame` in the warm pass.
    Frame { frame: usize },
}

#[derive(Debug, Clone)]
pub struct FrameSeries<T: Real = f64> {
    pub frames: Vec<ComplexVolume<T>>,
    pub mu: Vec<f64>,
    pub objective_traces: Vec<Vec<f64>>,
    pub init_sources: Vec<InitSource>,
    /// Warm-pass estimates kept by the refined strategy.
    pub first_pass: Option<Vec<ComplexVolume<T>>>,
    pub method: ReconMethod,
    pub strategy: Strategy,
    pub tr_vol: f64,
    pub voxel_size: [f64; 3],
}

/// Reconstructs every frame of a dataset with the true coil maps.
pub fn reconstruct_series<T: Real>(dataset: &KSpaceDataset, coils: &CoilProfile<T>, config: &ReconConfig) -> Result<FrameSeries<T>> {
    config.validate()?;
    let header = &dataset.header;
    if dataset.frames.is_empty() {
        return Err(invalid("dataset holds no frames"));
    }
    if coils.dims() != header.dims || coils.n_coils() != header.n_coils {
        return Err(Error::Shape("coil maps do not match the dataset".into()));
    }
    let plan = header.plan()?;
    let n = dataset.frames.len();
    let dims = header.dims;
    let basis = config.wavelet;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(config.n_jobs))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let wrap = |t: usize| move |e: Error| Error::Frame { frame: t, source: Box::new(e) };
    let series = |frames, mu, traces, inits, first_pass| FrameSeries {
        frames,
        mu,
        objective_traces: traces,
        init_sources: inits,
        first_pass,
        method: config.method,
        strategy: config.strategy,
        tr_vol: header.tr_vol(),
        voxel_size: header.voxel_size,
    };

    if config.method == ReconMethod::Adjoint {
        let frames = pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|t| adjoint_recon(&raw_frame::<T>(&dataset.frames[t]), plan.frame(t), coils, config.density_comp).map_err(wrap(t)))
                .collect::<Result<Vec<_>>>()
        })?;
        return Ok(series(frames, vec![0.0; n], vec![Vec::new(); n], vec![InitSource::Adjoint; n], None));
    }

    let solve = |t: usize, init: Option<&ComplexVolume<T>>| -> Result<FrameEstimate<T>> {
        let y = scaled_frame::<T>(&dataset.frames[t], dims);
        cs_solve(&y, plan.frame(t), coils, &basis, config, init).map_err(wrap(t))
    };
    let unpack = |est: Vec<FrameEstimate<T>>| {
        let mut frames = Vec::with_capacity(est.len());
        let mut mu = Vec::with_capacity(est.len());
        let mut traces = Vec::with_capacity(est.len());
        for e in est {
            frames.push(e.volume);
            mu.push(e.mu_used);
            traces.push(e.objective_trace);
        }
        (frames, mu, traces)
    };

    match config.strategy {
        Strategy::Cold => {
            let est = pool.install(|| (0..n).into_par_iter().map(|t| solve(t, None)).collect::<Result<Vec<_>>>())?;
            let (f, m, tr) = unpack(est);
            Ok(series(f, m, tr, vec![InitSource::Adjoint; n], None))
        }
        Strategy::Warm | Strategy::Refined => {
            let mut est: Vec<FrameEstimate<T>> = Vec::with_capacity(n);
            let mut inits = Vec::with_capacity(n);
            pool.install(|| -> Result<()> {
                for t in 0..n {
                    let e = solve(t, est.last().map(|e| &e.volume))?;
                    inits.push(if t == 0 { InitSource::Adjoint } else { InitSource::Frame { frame: t - 1 } });
                    est.push(e);
                }
                Ok(())
            })?;
            if config.strategy == Strategy::Warm {
                let (f, m, tr) = unpack(est);
                return Ok(series(f, m, tr, inits, None));
            }
            let (first, _, _) = unpack(est);
            let last = &first[n - 1];
            let second = pool.install(|| (0..n).into_par_iter().map(|t| solve(t, Some(last))).collect::<Result<Vec<_>>>())?;
            let (f, m, tr) = unpack(second);
            Ok(series(f, m, tr, vec![InitSource::Frame { frame: n - 1 }; n], Some(first)))
        }
    }
}

/// Contents of a persisted series' `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesIndex {
    pub n_frames: usize,
    pub dims: Dims,
    pub voxel_size: [f64; 3],
    pub tr_vol: f64,
    pub method: ReconMethod,
    pub strategy: Strategy,
    pub mu: Vec<f64>,
    pub frames: Vec<String>,
    pub objective_traces: String,
}

pub const SERIES_INDEX: &str = "index.json";
pub const SERIES_TRACES: &str = "objective_traces.csv";

impl<T: Real> FrameSeries<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<Array3<f64>> {
        self.frames.iter().map(|f| magnitude(f).mapv(|v| v.as_f64())).collect()
    }

    /// Writes one magnitude volume per frame, the index and the objective traces.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let vs = self.voxel_size.map(|v| v as f32);
        let mut written = Vec::new();
        let mut names = Vec::new();
        for (t, f) in self.frames.iter().enumerate() {
            let name = format!("frame_{t:05}.snkv");
            let path = dir.join(&name);
            write_snkv(&path, &magnitude(f).mapv(|v| v.as_f64() as f32), vs)?;
            written.push(path);
            names.push(name);
        }
        let mut csv = String::from("frame,iteration,objective\n");
        for (t, tr) in self.objective_traces.iter().enumerate() {
            for (i, v) in tr.iter().enumerate() {
                csv.push_str(&format!("{t},{i},{v:e}\n"));
            }
        }
        let traces = dir.join(SERIES_TRACES);
        fs::File::create(&traces)?.write_all(csv.as_bytes())?;
        written.push(traces);
        let index = SeriesIndex {
            n_frames: self.frames.len(),
            dims: self.frames.first().map_or([0; 3], crate::volume::dims_of),
            voxel_size: self.voxel_size,
            tr_vol: self.tr_vol,
            method: self.method,
            strategy: self.strategy,
            mu: self.mu.clone(),
            frames: names,
            objective_traces: SERIES_TRACES.into(),
        };
        let path = dir.join(SERIES_INDEX);
        fs::write(&path, serde_json::to_string_pretty(&serde_json::to_value(&index)?)?)?;
        written.push(path);
        Ok(written)
    }
}

/// Reads a persisted series as magnitude volumes.
pub fn load_series(dir: &Path) -> Result<(SeriesIndex, Vec<Array3<f64>>)> {
    let index: SeriesIndex = serde_json::from_slice(&fs::read(dir.join(SERIES_INDEX))?)?;
    let frames = index
        .frames
        .iter()
        .map(|f| read_snkv(&dir.join(f)).map(|v| v.data.mapv(|x| x as f64)))
        .collect::<Result<Vec<_>>>()?;
    if frames.len() != index.n_frames {
        return Err(Error::Format {
            kind: "series index",
            reason: format!("{} frames listed, {} found", index.n_frames, frames.len()),
        });
    }
    Ok((index, frames))
}
