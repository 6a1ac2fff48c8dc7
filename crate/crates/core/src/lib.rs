//! Simulation of 3D fMRI acquisitions with non-Cartesian sampling and
//! sparse reconstruction of the resulting time series.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod fft;
pub mod phantom;
pub mod recon;
pub mod scalar;
pub mod scenarios;
pub mod trajectories;
pub mod volume;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Phantom32 = phantom::Phantom<f32>;
pub type Phantom64 = phantom::Phantom<f64>;
pub type BoldSpec32 = phantom::BoldSpec<f32>;
pub type BoldSpec64 = phantom::BoldSpec<f64>;
pub type CoilProfile32 = engine::CoilProfile<f32>;
pub type CoilProfile64 = engine::CoilProfile<f64>;
pub type FrameEstimate32 = recon::FrameEstimate<f32>;
pub type FrameEstimate64 = recon::FrameEstimate<f64>;
pub type FrameSeries32 = recon::FrameSeries<f32>;
pub type FrameSeries64 = recon::FrameSeries<f64>;
pub type Setup32 = scenarios::Setup<f32>;
pub type Setup64 = scenarios::Setup<f64>;
