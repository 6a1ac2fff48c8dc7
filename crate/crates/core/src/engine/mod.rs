//! Shot-by-shot k-space acquisition of a BOLD-modulated phantom.

pub mod coils;
pub mod dataset;
pub mod ndft;
pub mod noise;
pub mod signal;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::phantom::{bold_modulate, gre_contrast, BoldSpec, Phantom, SequenceParams};
use crate::scalar::Real;
use crate::trajectories::SamplingPlan;
use crate::volume::RealVolume;

pub use coils::{birdcage_coils, CoilProfile};
pub use dataset::{
    parse_dataset, read_dataset, write_dataset, DatasetHeader, DatasetSink, DatasetWriter, FileSink, FrameSamples,
    KSpaceDataset, MemorySink, TrajectoryEmbed, sha256_hex, DATASET_MAGIC, DATASET_VERSION,
};
pub use ndft::{ndft, ndft_adjoint, Ndft};
pub use noise::{add_noise, phantom_energy, psd_cholesky, EnergyConvention, NoiseConfig, NoiseGenerator};
pub use signal::{acquire_shot_basic, acquire_shot_t2s, OffResonanceTerms, ShotSamples, SignalModel};

pub const NJOBS_ENV: &str = "SNAKE_NJOBS";

/// Worker count: `SNAKE_NJOBS` if set, else `requested`, with 0 meaning all cores.
pub fn resolve_jobs(requested: usize) -> usize {
    let n = std::env::var(NJOBS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(requested);
    if n == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        n
    }
}

/// Everything needed to simulate one run.
pub struct Acquisition<'a, T: Real> {
    pub phantom: &'a Phantom<T>,
    pub plan: &'a SamplingPlan,
    pub coils: &'a CoilProfile<T>,
    pub seq: &'a SequenceParams,
    pub bold: &'a BoldSpec<T>,
    pub model: SignalModel,
    pub noise: &'a NoiseConfig,
    pub offres: &'a OffResonanceTerms<T>,
    pub n_jobs: usize,
}

impl<T: Real> Acquisition<'_, T> {
    pub fn validate(&self) -> Result<()> {
        let dims = self.phantom.dims;
        self.seq.validate()?;
        self.plan.validate()?;
        if self.plan.dims != dims {
            return Err(Error::Shape(format!(
                "plan grid {:?} differs from phantom {:?}",
                self.plan.dims, dims
            )));
        }
        self.coils.validate()?;
        if self.coils.dims() != dims {
            return Err(Error::Shape("coil maps differ from phantom dims".into()));
        }
        self.bold.validate(dims)?;
        if self.bold.h_tilde.len() != self.plan.shots.len() {
            return Err(invalid(format!(
                "BOLD response has {} values for {} shots",
                self.bold.h_tilde.len(),
                self.plan.shots.len()
            )));
        }
        if self.bold.tissue >= self.phantom.n_tissues() {
            return Err(invalid("BOLD tissue index out of range"));
        }
        self.noise.validate(self.coils.n_coils())?;
        self.offres.validate(dims, self.plan.samples_per_shot())?;
        if self.plan.shots.iter().any(|s| s.len() != self.plan.samples_per_shot()) {
            return Err(invalid("all shots must have the same sample count"));
        }
        Ok(())
    }
}

/// Simulates every shot in plan order and streams frames to `sink`.
///
/// Each shot sees the phantom modulated at its own time. On failure the sink
/// is closed as aborted and the error names the frame.
pub fn run_acquisition<T: Real>(acq: &Acquisition<'_, T>, sink: &mut dyn DatasetSink) -> Result<DatasetHeader> {
    acq.validate()?;
    let phantom = acq.phantom;
    let plan = acq.plan;
    let mu = gre_contrast(phantom, acq.seq);
    let tissue_vols = phantom.tissue_volumes(&mu);
    let energy = phantom_energy(&phantom.contrast_volume(&mu), acq.noise.energy);
    let noise = NoiseGenerator::new(acq.noise, acq.coils.n_coils(), energy)?;
    let b = acq.bold.tissue;
    let mut static_part = RealVolume::<T>::zeros(phantom.dims);
    for (i, v) in tissue_vols.iter().enumerate() {
        if i != b {
            static_part += v;
        }
    }
    let t2_star: Vec<f64> = phantom.tissues.iter().map(|t| t.t2_star).collect();
    let n_frames = plan.n_frames();

    let header = DatasetHeader {
        version: dataset::DATASET_VERSION,
        dims: phantom.dims,
        voxel_size: phantom.voxel_size,
        n_coils: acq.coils.n_coils(),
        n_frames,
        shots_per_frame: plan.shots_per_frame,
        samples_per_shot: plan.samples_per_shot(),
        tr_shot: plan.tr_shot,
        te: acq.seq.te,
        model: acq.model,
        seed: acq.noise.seed,
        snr: (!acq.noise.is_off()).then_some(acq.noise.snr),
        energy,
        trajectory: TrajectoryEmbed::from_plan(plan)?,
        status: dataset::STATUS_WRITING.into(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(acq.n_jobs))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;

    let shot_samples = |g: usize| -> Result<ShotSamples<T>> {
        let shot = &plan.shots[g];
        let gm = bold_modulate(&tissue_vols[b], acq.bold, acq.seq.te, g);
        let mut y = match acq.model {
            SignalModel::Basic => {
                let vol = &static_part + &gm;
                acquire_shot_basic(&vol, acq.coils, shot)
            }
            SignalModel::T2s => {
                let mut vols = tissue_vols.clone();
                vols[b] = gm;
                acquire_shot_t2s(&vols, &t2_star, acq.coils, shot, acq.offres)?
            }
        };
        if let Some(n) = &noise {
            n.add(&mut y, g as u64);
        }
        Ok(y)
    };

    sink.begin(&header)?;
    let result = (|| -> Result<()> {
        for t in 0..n_frames {
            let start = t * plan.shots_per_frame;
            let shots: Vec<ShotSamples<T>> = pool
                .install(|| {
                    (start..start + plan.shots_per_frame)
                        .into_par_iter()
                        .map(shot_samples)
                        .collect::<Result<Vec<_>>>()
                })
                .map_err(|e| Error::Frame {
                    frame: t,
                    source: Box::new(e),
                })?;
            let frame: FrameSamples = (0..header.n_coils)
                .map(|l| {
                    shots
                        .iter()
                        .map(|s| s[l].iter().map(|v| num_complex::Complex::new(v.re.as_f64() as f32, v.im.as_f64() as f32)).collect())
                        .collect()
                })
                .collect();
            sink.frame(t, &frame).map_err(|e| Error::Frame {
                frame: t,
                source: Box::new(e),
            })?;
        }
        Ok(())
    })();
    let ok = result.is_ok();
    sink.finish(ok)?;
    result?;
    Ok(DatasetHeader {
        status: dataset::STATUS_SUCCESS.into(),
        ..header
    })
}

/// Runs an acquisition into memory.
pub fn acquire_dataset<T: Real>(acq: &Acquisition<'_, T>) -> Result<KSpaceDataset> {
    let mut sink = MemorySink::default();
    run_acquisition(acq, &mut sink)?;
    Ok(sink.dataset.expect("dataset written"))
}
