//! `kafr` command line: detection ingest, key-frame selection, manifest
//! transforms, scoring, charts, and synthetic fixtures over one flat
//! configuration. Every invocation writes its artifacts plus a
//! run_manifest.json naming them with content hashes, and identical
//! configs over identical inputs produce byte-identical artifacts.

mod artifacts;
mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use config::FileConfig;
use errors::CliError;

#[derive(Parser)]
#[command(name = "kafr", version, about = "Key-frame extraction and evaluation toolkit")]
struct Cli {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory artifacts are written into.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Videos processed concurrently; defaults to $KAFR_JOBS, then all cores.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Stamp the run manifest with wall-clock time (breaks rerun identity).
    #[arg(long, global = true)]
    timestamps: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse detections, filter by confidence, and emit tracks + kinematics.
    Ingest(IngestArgs),
    /// Pick key frames for every video with the configured selector.
    Select(SelectArgs),
    /// Fit an accumulation budget to a target key-frame fraction.
    Calibrate(CalibrateArgs),
    /// Rebalance annotated steps to a fixed per-step frame count.
    Resample(ResampleArgs),
    /// Cut fixed-length clip windows from a frame manifest.
    Clips(ClipsArgs),
    /// Score predictions against phase annotations.
    Evaluate(EvaluateArgs),
    /// Draw an SVG phase timeline per predicted video.
    Render(RenderArgs),
    /// Generate a deterministic synthetic detection corpus.
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Select(_) => "select",
            Command::Calibrate(_) => "calibrate",
            Command::Resample(_) => "resample",
            Command::Clips(_) => "clips",
            Command::Evaluate(_) => "evaluate",
            Command::Render(_) => "render",
            Command::Synth(_) => "synth",
        }
    }

    fn overrides(&self) -> FileConfig {
        match self {
            Command::Ingest(a) => a.config(),
            Command::Select(a) => a.config(),
            Command::Calibrate(a) => a.config(),
            Command::Resample(a) => a.config(),
            Command::Clips(a) => a.config(),
            Command::Evaluate(a) => a.config(),
            Command::Render(a) => a.config(),
            Command::Synth(a) => a.config(),
        }
    }
}

/// Flags shared by every command that reads a detection stream.
#[derive(Args)]
struct DetectionArgs {
    /// Detection stream (.jsonl or .csv).
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// Stream format when the extension is ambiguous: jsonl or csv.
    #[arg(long, value_name = "NAME")]
    format: Option<String>,
    /// Drop detections at or below this confidence.
    #[arg(long, value_name = "CONF")]
    min_confidence: Option<f64>,
    /// Role preset: one, two, four, or six.
    #[arg(long, value_name = "PRESET")]
    objects: Option<String>,
    /// Pixel width of the camera image (splits left and right roles).
    #[arg(long, value_name = "PX")]
    image_width: Option<f64>,
}

impl DetectionArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            detections: self.detections.clone(),
            format: self.format.clone(),
            min_confidence: self.min_confidence,
            objects: self.objects.clone(),
            image_width: self.image_width,
            ..FileConfig::default()
        }
    }
}

/// Flags shared by the selection-policy commands.
#[derive(Args)]
struct PolicyArgs {
    /// Selector: adaptive1, adaptive2, mse, or ufs.
    #[arg(long, value_name = "NAME")]
    algorithm: Option<String>,
    /// Threshold-to-budget slope.
    #[arg(long, value_name = "BETA")]
    beta: Option<f64>,
    /// Threshold-to-budget offset guard.
    #[arg(long, value_name = "EPS")]
    epsilon: Option<f64>,
    /// Largest frame gap a speed may bridge.
    #[arg(long, value_name = "FRAMES")]
    max_gap: Option<u64>,
    /// Accumulate against the previous frame instead of the last key frame.
    #[arg(long)]
    consecutive: bool,
    /// Target key-frame fraction in (0, 1].
    #[arg(long, value_name = "FRAC")]
    target: Option<f64>,
    /// Preset target percentage: 1, 5, 10, 15, 20, 30, or 50.
    #[arg(long, value_name = "PCT")]
    percent: Option<u32>,
    /// Calibrate one budget over the whole corpus instead of per video.
    #[arg(long)]
    corpus: bool,
    /// Directory of per-video PGM frame folders (mse selector).
    #[arg(long, value_name = "DIR")]
    frames_dir: Option<PathBuf>,
}

impl PolicyArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            algorithm: self.algorithm.clone(),
            beta: self.beta,
            epsilon: self.epsilon,
            max_gap: self.max_gap,
            consecutive: self.consecutive.then_some(true),
            target: self.target,
            percent: self.percent,
            corpus: self.corpus.then_some(true),
            frames_dir: self.frames_dir.clone(),
            ..FileConfig::default()
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    detections: DetectionArgs,
    /// Largest frame gap a speed may bridge.
    #[arg(long, value_name = "FRAMES")]
    max_gap: Option<u64>,
}

impl IngestArgs {
    fn config(&self) -> FileConfig {
        self.detections.config().overlay(FileConfig {
            max_gap: self.max_gap,
            ..FileConfig::default()
        })
    }
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    detections: DetectionArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Fixed accumulation budget.
    #[arg(long, value_name = "BUDGET")]
    budget: Option<f64>,
    /// Per-step threshold, converted through beta and epsilon.
    #[arg(long, value_name = "THRESH")]
    threshold: Option<f64>,
    /// Video id for --frame-count (ufs without detections).
    #[arg(long, value_name = "ID")]
    video: Option<String>,
    /// Frame count for --video (ufs without detections).
    #[arg(long, value_name = "N")]
    frame_count: Option<u64>,
}

impl SelectArgs {
    fn config(&self) -> FileConfig {
        self.detections.config().overlay(self.policy.config()).overlay(FileConfig {
            budget: self.budget,
            threshold: self.threshold,
            video: self.video.clone(),
            frame_count: self.frame_count,
            ..FileConfig::default()
        })
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    detections: DetectionArgs,
    #[command(flatten)]
    policy: PolicyArgs,
}

impl CalibrateArgs {
    fn config(&self) -> FileConfig {
        self.detections.config().overlay(self.policy.config())
    }
}

#[derive(Args)]
struct ResampleArgs {
    /// Phase annotation CSV.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Frame manifest CSV; defaults to one raw row per annotated frame.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Key-frame set JSON, or a directory of them, to filter by first.
    #[arg(long, value_name = "PATH")]
    keyframes: Option<PathBuf>,
    /// Drop rows covered by idle (label 0) segments before resampling.
    #[arg(long)]
    exclude_idle: bool,
    /// Expanded frames every annotated step is rebalanced to.
    #[arg(long, value_name = "N")]
    frames_per_step: Option<u64>,
}

impl ResampleArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            annotations: self.annotations.clone(),
            manifest: self.manifest.clone(),
            keyframes: self.keyframes.clone(),
            exclude_idle: self.exclude_idle.then_some(true),
            frames_per_step: self.frames_per_step,
            ..FileConfig::default()
        }
    }
}

#[derive(Args)]
struct ClipsArgs {
    /// Frame manifest CSV.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Frames per clip window.
    #[arg(long, value_name = "N")]
    clip_length: Option<usize>,
}

impl ClipsArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            manifest: self.manifest.clone(),
            clip_length: self.clip_length,
            ..FileConfig::default()
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction CSV.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// Phase annotation CSV.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Odd modal-smoothing window applied before scoring.
    #[arg(long, value_name = "N")]
    smooth_window: Option<u64>,
    /// Score task frames only: drop frames covered by idle segments.
    #[arg(long)]
    exclude_idle: bool,
    /// Baseline metric report JSON to compute relative changes against.
    #[arg(long, value_name = "FILE")]
    baseline: Option<PathBuf>,
}

impl EvaluateArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            predictions: self.predictions.clone(),
            annotations: self.annotations.clone(),
            smooth_window: self.smooth_window,
            exclude_idle: self.exclude_idle.then_some(true),
            baseline: self.baseline.clone(),
            ..FileConfig::default()
        }
    }
}

#[derive(Args)]
struct RenderArgs {
    /// Prediction CSV.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// Phase annotation CSV for a ground-truth lane.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Odd modal-smoothing window for an extra smoothed lane.
    #[arg(long, value_name = "N")]
    smooth_window: Option<u64>,
}

impl RenderArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            predictions: self.predictions.clone(),
            annotations: self.annotations.clone(),
            smooth_window: self.smooth_window,
            ..FileConfig::default()
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Number of videos to generate.
    #[arg(long, value_name = "N")]
    videos: Option<u64>,
    /// Frames per video.
    #[arg(long, value_name = "N")]
    duration: Option<u64>,
    /// Frames per phase segment.
    #[arg(long, value_name = "N")]
    segment_len: Option<u64>,
    /// Corpus seed; video v derives its stream from seed + v.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Also write a PGM frame stack per video.
    #[arg(long)]
    emit_frames: bool,
    /// Frame width in pixels (with --emit-frames).
    #[arg(long, value_name = "PX")]
    width: Option<usize>,
    /// Frame height in pixels (with --emit-frames).
    #[arg(long, value_name = "PX")]
    height: Option<usize>,
}

impl SynthArgs {
    fn config(&self) -> FileConfig {
        FileConfig {
            videos: self.videos,
            duration: self.duration,
            segment_len: self.segment_len,
            seed: self.seed,
            emit_frames: self.emit_frames.then_some(true),
            width: self.width,
            height: self.height,
            ..FileConfig::default()
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => config::load(path)?,
        None => FileConfig::default(),
    };
    cfg = cfg.overlay(FileConfig {
        out_dir: cli.out_dir.clone(),
        jobs: cli.jobs,
        timestamps: cli.timestamps.then_some(true),
        ..FileConfig::default()
    });
    cfg = cfg.overlay(cli.command.overrides());
    let ctx = Ctx::new(cfg)?;
    let outputs = match &cli.command {
        Command::Ingest(_) => commands::ingest::run(&ctx)?,
        Command::Select(_) => commands::select::run(&ctx)?,
        Command::Calibrate(_) => commands::calibrate::run(&ctx)?,
        Command::Resample(_) => commands::resample::run(&ctx)?,
        Command::Clips(_) => commands::clips::run(&ctx)?,
        Command::Evaluate(_) => commands::evaluate::run(&ctx)?,
        Command::Render(_) => commands::render::run(&ctx)?,
        Command::Synth(_) => commands::synth::run(&ctx)?,
    };
    artifacts::finish(&ctx, cli.command.name(), outputs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
