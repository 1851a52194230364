//! gaitkit command line: synthesize recordings with known ground truth,
//! triangulate multi-camera keypoints, run the kinematic analysis, and
//! compare two analyses.

mod commands;
mod config;
mod summary;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

/// User-facing failures. Input problems (bad flags or config, missing or
/// unparseable files) exit with 2; pipeline-stage failures exit with 1.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn stage(stage: &'static str, err: impl std::fmt::Display) -> CliError {
        CliError::Stage { stage, message: err.to_string() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(message) => write!(f, "{message}"),
            CliError::Stage { stage, message } => write!(f, "{stage}: {message}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "gaitkit", version, about = "Markerless gait analysis pipeline")]
struct Cli {
    /// TOML configuration file; command-line flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory receiving generated files [default: gaitkit_out]
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording with known ground truth
    Synth(SynthArgs),
    /// Triangulate per-camera 2D keypoints into 3D marker trajectories
    Triangulate(TriangulateArgs),
    /// Filter, solve kinematics, segment gait cycles, and summarize
    Analyze(AnalyzeArgs),
    /// Compare two analysis summaries parameter by parameter
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Seed for the noise and dropout generator
    #[arg(long)]
    seed: Option<u64>,
    /// Number of strides to synthesize
    #[arg(long)]
    n_strides: Option<usize>,
    /// Gaussian pixel noise SD added to projected keypoints
    #[arg(long)]
    pixel_noise_sd: Option<f64>,
    /// Probability that any single observation is dropped
    #[arg(long)]
    dropout_rate: Option<f64>,
}

#[derive(Args)]
struct TriangulateArgs {
    /// Camera calibration JSON
    #[arg(long, value_name = "PATH")]
    calibration: Option<PathBuf>,
    /// Per-camera keypoint sequence JSON; repeat once per camera
    #[arg(long = "keypoints", value_name = "PATH")]
    keypoints: Vec<PathBuf>,
    /// Output TRC path [default: <output-dir>/markers.trc]
    #[arg(long, value_name = "PATH")]
    markers: Option<PathBuf>,
    /// Minimum keypoint confidence admitted to triangulation
    #[arg(long)]
    min_confidence: Option<f64>,
    /// Capture rate of the keypoint streams in Hz
    #[arg(long)]
    sample_rate: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input marker trajectory TRC
    #[arg(long, value_name = "PATH")]
    markers: Option<PathBuf>,
    /// Static-pose TRC used to scale the model
    #[arg(long, value_name = "PATH")]
    static_trial: Option<PathBuf>,
    /// Skeleton model JSON [default: built-in lower-limb model]
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Butterworth low-pass cutoff in Hz
    #[arg(long)]
    cutoff_hz: Option<f64>,
    /// Butterworth filter order
    #[arg(long)]
    filter_order: Option<usize>,
    /// Longest interior gap repaired by interpolation, in frames
    #[arg(long)]
    max_gap: Option<usize>,
    /// Walking axis as "x,y,z" [default: estimated from the pelvis path]
    #[arg(long, value_name = "X,Y,Z")]
    walking_axis: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference analysis.json
    reference: PathBuf,
    /// Candidate analysis.json
    candidate: PathBuf,
}

fn override_option<T>(target: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *target = value;
    }
}

fn parse_axis(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    let err = || {
        CliError::Input(format!(
            "--walking-axis expects three comma-separated numbers, got '{text}'"
        ))
    };
    if parts.len() != 3 {
        return Err(err());
    }
    let mut axis = [0.0; 3];
    for (slot, part) in axis.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| err())?;
    }
    Ok(axis)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    override_option(&mut cfg.output_dir, cli.output_dir);
    let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("gaitkit_out"));

    match cli.command {
        Command::Synth(args) => {
            override_option(&mut cfg.synth.recipe.seed, args.seed);
            override_option(&mut cfg.synth.recipe.n_strides, args.n_strides);
            if let Some(v) = args.pixel_noise_sd {
                cfg.synth.pixel_noise_sd = v;
            }
            if let Some(v) = args.dropout_rate {
                cfg.synth.dropout_rate = v;
            }
            commands::cmd_synth(&cfg, &out_dir)
        }
        Command::Triangulate(args) => {
            override_option(&mut cfg.paths.calibration, args.calibration);
            if !args.keypoints.is_empty() {
                cfg.paths.keypoints = args.keypoints;
            }
            override_option(&mut cfg.paths.markers, args.markers);
            if let Some(v) = args.min_confidence {
                cfg.triangulate.min_confidence = v;
            }
            if let Some(v) = args.sample_rate {
                cfg.triangulate.sample_rate = v;
            }
            commands::cmd_triangulate(&cfg, &out_dir)
        }
        Command::Analyze(args) => {
            override_option(&mut cfg.paths.markers, args.markers);
            override_option(&mut cfg.paths.static_trial, args.static_trial);
            override_option(&mut cfg.paths.model, args.model);
            if let Some(v) = args.cutoff_hz {
                cfg.filter.cutoff_hz = v;
            }
            if let Some(v) = args.filter_order {
                cfg.filter.order = v;
            }
            if let Some(v) = args.max_gap {
                cfg.filter.max_gap = v;
            }
            if let Some(text) = args.walking_axis.as_deref() {
                cfg.events.walking_axis = Some(parse_axis(text)?);
            }
            commands::cmd_analyze(&cfg, &out_dir)
        }
        Command::Compare(args) => {
            commands::cmd_compare(&args.reference, &args.candidate, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
