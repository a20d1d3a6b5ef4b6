//! Flat run configuration: every knob any subcommand reads, each optional.
//! A JSON config file fills fields first and command-line flags overlay it
//! field by field, so a flag always beats the file. The merged struct is
//! echoed verbatim into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::errors::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    // Inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keyframes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,

    // Policy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objects: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_gap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consecutive: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<u64>,

    // Pipeline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames_per_step: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_window: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude_idle: Option<bool>,

    // Synthesis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub videos: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_len: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_frames: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,

    // Run control.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<bool>,
}

impl FileConfig {
    /// Field-by-field merge; `over` wins wherever it holds a value.
    pub fn overlay(mut self, over: FileConfig) -> FileConfig {
        macro_rules! lay {
            ($($f:ident),* $(,)?) => {
                $( if over.$f.is_some() { self.$f = over.$f; } )*
            };
        }
        lay!(
            detections, annotations, predictions, manifest, keyframes, frames_dir, baseline,
            format, algorithm, objects, min_confidence, image_width, beta, epsilon, max_gap,
            consecutive, target, percent, budget, threshold, corpus, video, frame_count,
            frames_per_step, clip_length, smooth_window, exclude_idle, videos, duration,
            segment_len, seed, emit_frames, width, height, out_dir, jobs, timestamps,
        );
        self
    }
}

pub fn load(path: &Path) -> Result<FileConfig, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
}
