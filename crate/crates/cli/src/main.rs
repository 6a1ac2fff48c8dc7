use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use snake_core::scenarios::{build_setup, load_metrics, preset, run_pipeline, RunConfig, PRESET_NAMES};
use snake_core::trajectories::{parse_trajectory, write_trajectory_file};
use snake_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "snake", version, about = "Shot-wise fMRI acquisition simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run setup, acquisition, reconstruction and analysis.
    Run {
        /// YAML config file or preset name.
        config: String,
        /// Preset scale in (0, 1]; only valid with a preset name.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// External trajectory for presets that need one.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Print a preset config as YAML.
    Preset {
        name: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Print the metrics report of a finished run.
    Metrics { run_dir: PathBuf },
    /// Trajectory utilities.
    Traj {
        #[command(subcommand)]
        command: TrajCommand,
    },
}

#[derive(Subcommand)]
enum TrajCommand {
    /// Write the sampling plan of a config to an SNKT1 file.
    Gen {
        config: String,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize an SNKT1 file.
    Inspect {
        file: PathBuf,
        /// Grid the coordinates must fit, e.g. 64,64,32.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::UnknownTissue(_)
            | Error::WeightSum { .. }
            | Error::OutOfRange { .. }
            | Error::Format { .. }
            | Error::Indivisible { .. } => EXIT_VALIDATION,
            _ => EXIT_FAILURE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn validation(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

fn load_config(arg: &str, scale: Option<f64>, trajectory: Option<PathBuf>) -> Result<RunConfig, Failure> {
    if PRESET_NAMES.contains(&arg) && !Path::new(arg).exists() {
        return Ok(preset(arg, scale.unwrap_or(1.0), trajectory)?);
    }
    if scale.is_some() {
        return Err(validation("--scale applies to preset names, not config files"));
    }
    if trajectory.is_some() {
        return Err(validation("--trajectory applies to preset names, not config files"));
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(validation(format!(
            "`{arg}` is neither a config file nor a preset ({})",
            PRESET_NAMES.join(", ")
        )));
    }
    Ok(RunConfig::from_file(path)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            scale,
            seed,
            out,
            trajectory,
        } => {
            let mut cfg = load_config(&config, scale, trajectory)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let manifest = run_pipeline(&cfg, &dir)?;
            for s in &manifest.stages {
                eprintln!("{:<15} {:?} {:.2}s{}", s.name, s.status, s.seconds, s.error.as_deref().map(|e| format!(" {e}")).unwrap_or_default());
            }
            println!("{}", dir.display());
            if !manifest.success {
                return Err(Failure {
                    code: EXIT_STAGE,
                    message: format!("stage `{}` failed", manifest.failed_stage.unwrap_or_default()),
                });
            }
        }
        Command::Preset { name, scale, trajectory } => {
            let cfg = preset(&name, scale, trajectory)?;
            print!("{}", cfg.to_yaml()?);
        }
        Command::Metrics { run_dir } => {
            let report = load_metrics(&run_dir)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
        }
        Command::Traj { command } => match command {
            TrajCommand::Gen { config, scale, out } => {
                let cfg = load_config(&config, scale, None)?;
                cfg.validate()?;
                let setup = build_setup::<f64>(&cfg)?;
                write_trajectory_file(&setup.plan, &out)?;
                println!("{}", out.display());
            }
            TrajCommand::Inspect { file, dims } => {
                let grid = match dims.as_deref() {
                    Some(&[x, y, z]) => [x, y, z],
                    Some(_) => return Err(validation("--dims takes three comma-separated values")),
                    None => [1 << 24; 3],
                };
                let plan = parse_trajectory(&fs::read(&file)?, grid)?;
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for p in plan.shots.iter().flat_map(|s| &s.points) {
                    for a in 0..3 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
                let summary = json!({
                    "shots": plan.shots.len(),
                    "samples_per_shot": plan.samples_per_shot(),
                    "dwell_us": plan.dwell * 1e6,
                    "tr_shot_ms": plan.tr_shot * 1e3,
                    "readout_ms": plan.dwell * plan.samples_per_shot() as f64 * 1e3,
                    "k_min": lo,
                    "k_max": hi,
                });
                println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
