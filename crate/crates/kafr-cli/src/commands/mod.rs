//! Shared command context and input plumbing: config-backed defaults,
//! detection-track loading, PGM video discovery, driver resolution, and
//! the per-video thread pool honoring --jobs / KAFR_JOBS.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kafr::detections::{
    assign_roles, filter_confidence, parse_detections, DetectionFormat, DetectionRecord,
    ParseOutcome, RolePreset, ToolTrack, DEFAULT_MIN_CONFIDENCE,
};
use kafr::pgm::{load_frames_dir, GrayFrame};
use kafr::selection::{Algorithm, ReferenceMode, SelectionDriver, SelectionPolicy, PRESET_PERCENTS};

use crate::config::FileConfig;
use crate::errors::CliError;

pub mod calibrate;
pub mod clips;
pub mod evaluate;
pub mod ingest;
pub mod render;
pub mod resample;
pub mod select;
pub mod synth;

pub const DEFAULT_IMAGE_WIDTH: f64 = 1920.0;

pub struct Ctx {
    pub cfg: FileConfig,
    pub out_dir: PathBuf,
    /// 0 means rayon's default width.
    pub jobs: usize,
    pub timestamps: bool,
}

impl Ctx {
    pub fn new(cfg: FileConfig) -> Result<Self, CliError> {
        let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        let jobs = match cfg.jobs {
            Some(n) => n,
            None => match std::env::var("KAFR_JOBS") {
                Ok(v) => v.parse().map_err(|_| {
                    CliError::Config(format!(
                        "KAFR_JOBS must be a non-negative integer, got {v:?}"
                    ))
                })?,
                Err(_) => 0,
            },
        };
        let timestamps = cfg.timestamps == Some(true);
        Ok(Ctx { cfg, out_dir, jobs, timestamps })
    }

    /// Pool for per-video work.
    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))
    }
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn require<'a, T>(field: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    field.as_ref().ok_or_else(|| CliError::Config(format!("{flag} is required")))
}

pub fn parse_algorithm(cfg: &FileConfig) -> Result<Algorithm, CliError> {
    match cfg.algorithm.as_deref().unwrap_or("adaptive1") {
        "adaptive1" => Ok(Algorithm::Adaptive1),
        "adaptive2" => Ok(Algorithm::Adaptive2),
        "mse" => Ok(Algorithm::Mse),
        "ufs" => Ok(Algorithm::Ufs),
        other => Err(CliError::Config(format!(
            "unknown algorithm {other:?} (expected adaptive1|adaptive2|mse|ufs)"
        ))),
    }
}

pub fn parse_objects(cfg: &FileConfig) -> Result<RolePreset, CliError> {
    cfg.objects.as_deref().unwrap_or("two").parse::<RolePreset>().map_err(CliError::Config)
}

pub fn detection_format(path: &Path, cfg: &FileConfig) -> Result<DetectionFormat, CliError> {
    if let Some(name) = cfg.format.as_deref() {
        return match name {
            "jsonl" => Ok(DetectionFormat::Jsonl),
            "csv" => Ok(DetectionFormat::Csv),
            other => Err(CliError::Config(format!(
                "unknown format {other:?} (expected jsonl|csv)"
            ))),
        };
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => Ok(DetectionFormat::Jsonl),
        Some("csv") => Ok(DetectionFormat::Csv),
        _ => Err(CliError::Config(format!(
            "cannot infer the format of {}; pass --format jsonl|csv",
            path.display()
        ))),
    }
}

pub struct LoadedDetections {
    pub outcome: ParseOutcome,
    pub kept: Vec<DetectionRecord>,
    pub tracks: Vec<ToolTrack>,
}

/// Parse, confidence-filter, and role-assign the configured detection
/// stream.
pub fn load_detections(cfg: &FileConfig) -> Result<LoadedDetections, CliError> {
    let path = require(&cfg.detections, "--detections")?;
    let bytes = read_input(path)?;
    let format = detection_format(path, cfg)?;
    let outcome = parse_detections(&bytes, format)?;
    let min_conf = cfg.min_confidence.unwrap_or(DEFAULT_MIN_CONFIDENCE);
    let kept = filter_confidence(&outcome.records, min_conf);
    let width = cfg.image_width.unwrap_or(DEFAULT_IMAGE_WIDTH);
    if width <= 0.0 || !width.is_finite() {
        return Err(CliError::Config(format!("--image-width must be positive, got {width}")));
    }
    let preset = parse_objects(cfg)?;
    let tracks = assign_roles(&kept, width, &preset.parts());
    Ok(LoadedDetections { outcome, kept, tracks })
}

/// Tracks grouped per video in sorted order, preserving role order inside
/// each video.
pub fn tracks_by_video(tracks: Vec<ToolTrack>) -> BTreeMap<String, Vec<ToolTrack>> {
    let mut map: BTreeMap<String, Vec<ToolTrack>> = BTreeMap::new();
    for track in tracks {
        map.entry(track.video_id.clone()).or_default().push(track);
    }
    map
}

/// One video's PGM stack: its id plus (frame_index, frame) pairs sorted by
/// frame number.
pub type FrameVideo = (String, Vec<(u64, GrayFrame)>);

/// PGM videos under --frames-dir: each subdirectory is one video named by
/// the directory; a flat directory of .pgm files is a single video named
/// by the directory itself.
pub fn load_frame_videos(cfg: &FileConfig) -> Result<Vec<FrameVideo>, CliError> {
    let dir = require(&cfg.frames_dir, "--frames-dir")?;
    let listing = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut subdirs: Vec<PathBuf> = Vec::new();
    for entry in listing {
        let path = entry
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?
            .path();
        if path.is_dir() {
            subdirs.push(path);
        }
    }
    subdirs.sort();
    let name_of = |p: &Path| {
        p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "frames".into())
    };
    let mut videos = Vec::new();
    if subdirs.is_empty() {
        videos.push((name_of(dir), load_frames_dir(dir)?));
    } else {
        for sub in subdirs {
            videos.push((name_of(&sub), load_frames_dir(&sub)?));
        }
    }
    for (video_id, frames) in &videos {
        if frames.is_empty() {
            return Err(CliError::Data(format!("no .pgm frames found for video {video_id:?}")));
        }
    }
    Ok(videos)
}

/// The mutually exclusive ways to drive a selector.
#[derive(Debug, Clone, Copy)]
pub enum DriverChoice {
    Target(f64),
    Budget(f64),
    Threshold(f64),
}

pub fn resolve_driver(cfg: &FileConfig) -> Result<DriverChoice, CliError> {
    let mut chosen: Vec<DriverChoice> = Vec::new();
    if let Some(t) = cfg.target {
        chosen.push(DriverChoice::Target(t));
    }
    if let Some(p) = cfg.percent {
        if !PRESET_PERCENTS.contains(&p) {
            return Err(CliError::Config(format!(
                "--percent must be one of {PRESET_PERCENTS:?}, got {p}"
            )));
        }
        chosen.push(DriverChoice::Target(f64::from(p) / 100.0));
    }
    if let Some(b) = cfg.budget {
        chosen.push(DriverChoice::Budget(b));
    }
    if let Some(d) = cfg.threshold {
        chosen.push(DriverChoice::Threshold(d));
    }
    match chosen.len() {
        1 => Ok(chosen[0]),
        0 => Err(CliError::Config(
            "pick a selection driver: --target, --percent, --budget, or --threshold".into(),
        )),
        _ => Err(CliError::Config(
            "selection drivers are mutually exclusive; pass exactly one of --target, --percent, \
             --budget, --threshold"
                .into(),
        )),
    }
}

/// Policy from the merged config, validated before any sweep runs.
pub fn base_policy(
    cfg: &FileConfig,
    algorithm: Algorithm,
    driver: SelectionDriver,
) -> Result<SelectionPolicy, CliError> {
    let preset = parse_objects(cfg)?;
    let mut policy = SelectionPolicy::new(algorithm, preset.roles(), driver);
    if let Some(b) = cfg.beta {
        policy.beta = b;
    }
    if let Some(e) = cfg.epsilon {
        policy.epsilon = e;
    }
    if let Some(g) = cfg.max_gap {
        policy.max_gap = g;
    }
    if cfg.consecutive == Some(true) {
        policy.reference = ReferenceMode::Consecutive;
    }
    policy.validate()?;
    Ok(policy)
}

/// Safe file stem for a video id: anything outside [A-Za-z0-9._-] becomes
/// '_', and names that are empty or all dots are rewritten so artifact
/// paths cannot escape the output directory.
pub fn sanitize_id(id: &str) -> String {
    let mapped: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    if mapped.is_empty() || mapped.chars().all(|c| c == '.') {
        "_".into()
    } else {
        mapped
    }
}
