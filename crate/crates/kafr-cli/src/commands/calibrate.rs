//! `calibrate`: binary-search the accumulation budget whose sweep count
//! best matches a target fraction, per video or pooled over the corpus,
//! and record each budget alongside its equivalent per-step threshold.

use rayon::prelude::*;
use serde::Serialize;

use kafr::detections::ToolTrack;
use kafr::pgm::GrayFrame;
use kafr::selection::{
    calibrate, threshold_from_budget, Algorithm, Calibration, CalibrationInput, SelectionDriver,
};

use crate::artifacts::Artifact;
use crate::commands::{
    base_policy, load_detections, load_frame_videos, parse_algorithm, resolve_driver,
    tracks_by_video, Ctx, DriverChoice,
};
use crate::errors::CliError;

#[derive(Serialize)]
struct CalibrationRow {
    video_id: String,
    algorithm: &'static str,
    target_fraction: f64,
    accumulation_budget: f64,
    threshold: f64,
    achieved_fraction: f64,
    selected_count: usize,
    target_count: usize,
    domain_len: usize,
}

enum Owned {
    Tracks(Vec<ToolTrack>),
    Frames(Vec<GrayFrame>),
}

impl Owned {
    fn as_input(&self) -> CalibrationInput<'_> {
        match self {
            Owned::Tracks(tracks) => CalibrationInput::Tracks(tracks),
            Owned::Frames(frames) => CalibrationInput::Frames(frames),
        }
    }
}

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let algorithm = parse_algorithm(&ctx.cfg)?;
    let DriverChoice::Target(target) = resolve_driver(&ctx.cfg)? else {
        return Err(CliError::Config(
            "calibrate fits a budget to a fraction; pass --target or --percent".into(),
        ));
    };
    let policy = base_policy(&ctx.cfg, algorithm, SelectionDriver::TargetFraction(target))?;
    let videos: Vec<(String, Owned)> = match algorithm {
        Algorithm::Adaptive1 | Algorithm::Adaptive2 => {
            tracks_by_video(load_detections(&ctx.cfg)?.tracks)
                .into_iter()
                .map(|(video_id, tracks)| (video_id, Owned::Tracks(tracks)))
                .collect()
        }
        Algorithm::Mse => load_frame_videos(&ctx.cfg)?
            .into_iter()
            .map(|(video_id, frames)| {
                (video_id, Owned::Frames(frames.into_iter().map(|(_, f)| f).collect()))
            })
            .collect(),
        Algorithm::Ufs => {
            return Err(CliError::Config(
                "ufs has no budget to calibrate; drive select with --target directly".into(),
            ))
        }
    };
    if videos.is_empty() {
        return Err(CliError::Data("no videos to calibrate".into()));
    }

    let row = |video_id: &str, cal: Calibration| CalibrationRow {
        video_id: video_id.to_owned(),
        algorithm: algorithm.as_str(),
        target_fraction: target,
        accumulation_budget: cal.accumulation_budget,
        threshold: threshold_from_budget(cal.accumulation_budget, policy.beta, policy.epsilon),
        achieved_fraction: cal.achieved_fraction,
        selected_count: cal.selected_count,
        target_count: cal.target_count,
        domain_len: cal.domain_len,
    };
    let rows: Vec<CalibrationRow> = if ctx.cfg.corpus == Some(true) {
        let inputs: Vec<CalibrationInput> = videos.iter().map(|(_, o)| o.as_input()).collect();
        vec![row("corpus", calibrate(&policy, &inputs, target)?)]
    } else {
        ctx.pool()?.install(|| {
            videos
                .par_iter()
                .map(|(video_id, owned)| {
                    let cal = calibrate(&policy, &[owned.as_input()], target)?;
                    Ok(row(video_id, cal))
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?
    };
    let mut bytes = serde_json::to_vec_pretty(&rows).expect("calibration rows serialize");
    bytes.push(b'\n');
    Ok(vec![Artifact::new("calibration.json", bytes)])
}
