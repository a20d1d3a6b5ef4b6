//! `select`: one key-frame set per video. The adaptive selectors read
//! role tracks from detections, mse reads PGM frame folders, and ufs
//! needs only frame counts. A target driver calibrates per video unless
//! --corpus pools every video into one shared budget.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;

use kafr::pgm::GrayFrame;
use kafr::selection::{
    adaptive1_select, adaptive2_select, calibrate, mse_select, ufs_select, Algorithm,
    CalibrationInput, KeyFrameSet, SelectionDriver, SelectionPolicy,
};

use crate::artifacts::Artifact;
use crate::commands::{
    base_policy, load_detections, load_frame_videos, parse_algorithm, resolve_driver, sanitize_id,
    tracks_by_video, Ctx, DriverChoice,
};
use crate::errors::CliError;

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let algorithm = parse_algorithm(&ctx.cfg)?;
    let driver = resolve_driver(&ctx.cfg)?;
    let sets = match algorithm {
        Algorithm::Adaptive1 | Algorithm::Adaptive2 => select_tracks(ctx, algorithm, driver)?,
        Algorithm::Mse => select_mse(ctx, driver)?,
        Algorithm::Ufs => select_ufs(ctx, driver)?,
    };
    Ok(sets
        .into_iter()
        .map(|set| {
            let path =
                PathBuf::from("keyframes").join(format!("{}.json", sanitize_id(&set.video_id)));
            Artifact::new(path, set.to_json_bytes())
        })
        .collect())
}

/// Turn the chosen driver into a concrete policy. A target plus --corpus
/// calibrates one budget over every video's sweep up front; a per-video
/// target stays a target and calibrates inside each selection.
fn policy_for<'a>(
    ctx: &Ctx,
    algorithm: Algorithm,
    driver: DriverChoice,
    corpus_inputs: impl Fn() -> Vec<CalibrationInput<'a>>,
) -> Result<SelectionPolicy, CliError> {
    let corpus = ctx.cfg.corpus == Some(true);
    let driver = match driver {
        DriverChoice::Budget(b) => SelectionDriver::Budget(b),
        DriverChoice::Threshold(d) => SelectionDriver::Threshold(d),
        DriverChoice::Target(t) if !corpus => SelectionDriver::TargetFraction(t),
        DriverChoice::Target(t) => {
            let probe = base_policy(&ctx.cfg, algorithm, SelectionDriver::TargetFraction(t))?;
            let cal = calibrate(&probe, &corpus_inputs(), t)?;
            SelectionDriver::Budget(cal.accumulation_budget)
        }
    };
    base_policy(&ctx.cfg, algorithm, driver)
}

fn select_tracks(
    ctx: &Ctx,
    algorithm: Algorithm,
    driver: DriverChoice,
) -> Result<Vec<KeyFrameSet>, CliError> {
    let videos = tracks_by_video(load_detections(&ctx.cfg)?.tracks);
    if videos.is_empty() {
        return Err(CliError::Data(
            "no tracks survived confidence filtering and role assignment".into(),
        ));
    }
    let policy = policy_for(ctx, algorithm, driver, || {
        videos.values().map(|tracks| CalibrationInput::Tracks(tracks)).collect()
    })?;
    let select = match algorithm {
        Algorithm::Adaptive1 => adaptive1_select,
        Algorithm::Adaptive2 => adaptive2_select,
        _ => unreachable!("only the adaptive selectors take tracks"),
    };
    let list: Vec<&Vec<_>> = videos.values().collect();
    ctx.pool()?.install(|| {
        list.par_iter().map(|tracks| select(tracks, &policy).map_err(CliError::from)).collect()
    })
}

fn select_mse(ctx: &Ctx, driver: DriverChoice) -> Result<Vec<KeyFrameSet>, CliError> {
    let videos = load_frame_videos(&ctx.cfg)?;
    // The selector does not see file names, so split indices from rasters
    // and remap its 0..n positions back to true frame numbers afterwards.
    let stacks: Vec<(String, Vec<u64>, Vec<GrayFrame>)> = videos
        .into_iter()
        .map(|(video_id, frames)| {
            let (indices, rasters) = frames.into_iter().unzip();
            (video_id, indices, rasters)
        })
        .collect();
    let policy = policy_for(ctx, Algorithm::Mse, driver, || {
        stacks.iter().map(|(_, _, rasters)| CalibrationInput::Frames(rasters)).collect()
    })?;
    ctx.pool()?.install(|| {
        stacks
            .par_iter()
            .map(|(video_id, indices, rasters)| {
                let mut set = mse_select(video_id, rasters, &policy)?;
                set.selected = set.selected.iter().map(|&pos| indices[pos as usize]).collect();
                Ok(set)
            })
            .collect()
    })
}

fn select_ufs(ctx: &Ctx, driver: DriverChoice) -> Result<Vec<KeyFrameSet>, CliError> {
    let DriverChoice::Target(target) = driver else {
        return Err(CliError::Config(
            "ufs derives a uniform stride from a fraction; drive it with --target or --percent"
                .into(),
        ));
    };
    let counts: Vec<(String, u64)> = if ctx.cfg.detections.is_some() {
        // Frame count per video: one past the last detected frame.
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for record in load_detections(&ctx.cfg)?.kept {
            let count = counts.entry(record.video_id).or_insert(0);
            *count = (*count).max(record.frame_index + 1);
        }
        if counts.is_empty() {
            return Err(CliError::Data("no detections survived confidence filtering".into()));
        }
        counts.into_iter().collect()
    } else {
        let video = require_video(ctx)?;
        vec![video]
    };
    counts
        .iter()
        .map(|(video_id, count)| ufs_select(video_id, *count, target).map_err(CliError::from))
        .collect()
}

fn require_video(ctx: &Ctx) -> Result<(String, u64), CliError> {
    match (&ctx.cfg.video, ctx.cfg.frame_count) {
        (Some(video), Some(count)) => Ok((video.clone(), count)),
        _ => Err(CliError::Config(
            "ufs needs --detections, or --video together with --frame-count".into(),
        )),
    }
}
