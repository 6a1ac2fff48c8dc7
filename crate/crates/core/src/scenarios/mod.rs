//! Run configuration, built-in scenarios and the end-to-end pipeline.

pub mod config;
pub mod pipeline;
pub mod presets;

pub use config::{BoldConfig, CoilConfig, NoiseSpec, ParadigmConfig, PhantomConfig, Precision, RunConfig, SequenceConfig, TissueSpec, TrajectoryConfig};
pub use pipeline::{
    brain_spheres, build_setup, checksum_tree, load_metrics, run_pipeline, stage_seed, RunManifest, Setup, StageRecord, StageStatus, ANALYSIS_DIR, DATASET_FILE,
    MANIFEST_FILE, SERIES_DIR, STAGES,
};
pub use presets::{preset, shots_per_frame, summarize, ScenarioRow, PRESET_NAMES, SCENARIO_TABLE};
