//! `synth`: deterministic two-tool fixture corpus. Each video pairs a
//! right-jaw suture loop with a slow left-jaw drift, both kept inside
//! their camera half so role assignment recovers them, plus cycling phase
//! annotations and, on request, PGM frame stacks for the mse selector.

use std::path::PathBuf;

use rayon::prelude::*;

use kafr::detections::{serialize_detections, DetectionFormat, DetectionRecord, Role};
use kafr::pgm::{encode_pgm, frame_file_name};
use kafr::pipeline::{write_phase_csv, PhaseAnnotation};
use kafr::synth::{
    detections_from_track, generate_frames, generate_track, phase_cycle, Minstd, MotionKind,
    MotionProfile,
};

use crate::artifacts::Artifact;
use crate::commands::{sanitize_id, Ctx};
use crate::errors::CliError;

struct VideoFixture {
    records: Vec<DetectionRecord>,
    annotations: Vec<PhaseAnnotation>,
    frames: Vec<Artifact>,
}

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let cfg = &ctx.cfg;
    let videos = cfg.videos.unwrap_or(1);
    let duration = cfg.duration.unwrap_or(2000);
    let segment_len = cfg.segment_len.unwrap_or(300);
    let seed = cfg.seed.unwrap_or(1);
    if videos < 1 {
        return Err(CliError::Config("--videos must be at least 1".into()));
    }
    let emit_frames = cfg.emit_frames == Some(true);
    let width = cfg.width.unwrap_or(64);
    let height = cfg.height.unwrap_or(64);

    let fixtures: Vec<VideoFixture> = ctx.pool()?.install(|| {
        (0..videos)
            .into_par_iter()
            .map(|v| build_video(v, duration, segment_len, seed, emit_frames, width, height))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut records = Vec::new();
    let mut annotations = Vec::new();
    let mut artifacts = Vec::new();
    for fixture in fixtures {
        records.extend(fixture.records);
        annotations.extend(fixture.annotations);
        artifacts.extend(fixture.frames);
    }
    artifacts.push(Artifact::new(
        "detections.jsonl",
        serialize_detections(&records, DetectionFormat::Jsonl),
    ));
    artifacts.push(Artifact::new("annotations.csv", write_phase_csv(&annotations)));
    Ok(artifacts)
}

fn build_video(
    v: u64,
    duration: u64,
    segment_len: u64,
    seed: u64,
    emit_frames: bool,
    width: usize,
    height: usize,
) -> Result<VideoFixture, CliError> {
    let video_id = format!("video-{v}");
    let video_seed = seed.wrapping_add(v);
    let mut rng = Minstd::new(video_seed);
    let radius = 90.0 + rng.next_range(0, 50) as f64;
    let period = 79.0 + rng.next_range(0, 40) as f64;
    let right = MotionProfile {
        video_id: video_id.clone(),
        role: Role::RightJaw,
        kind: MotionKind::SutureLoop { cx: 1400.0, cy: 520.0, radius, period },
        duration,
        seed: video_seed,
    };
    let x0 = 120.0 + rng.next_range(0, 120) as f64;
    let y0 = 250.0 + rng.next_range(0, 100) as f64;
    // Drift spends a random fraction of the headroom to the image midline,
    // so the left tool stays in its half for any duration.
    let vx = (900.0 - x0) * (0.3 + 0.4 * rng.next_f64()) / duration as f64;
    let vy = (500.0 - y0) * (0.2 + 0.3 * rng.next_f64()) / duration as f64;
    let left = MotionProfile {
        video_id: video_id.clone(),
        role: Role::LeftJaw,
        kind: MotionKind::Linear { x0, y0, vx, vy },
        duration,
        seed: video_seed,
    };
    let mut records = detections_from_track(&generate_track(&right)?, 14.0, 0.9);
    records.extend(detections_from_track(&generate_track(&left)?, 14.0, 0.85));
    let annotations = phase_cycle(&video_id, duration, segment_len)?;

    let mut frames = Vec::new();
    if emit_frames {
        // The raster canvas is far smaller than the detection coordinate
        // space, so the frame stack gets its own loop scaled to fit.
        let raster = MotionProfile {
            video_id: video_id.clone(),
            role: Role::RightJaw,
            kind: MotionKind::SutureLoop {
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
                radius: width.min(height) as f64 / 4.0,
                period,
            },
            duration,
            seed: video_seed,
        };
        let dir = PathBuf::from("frames").join(sanitize_id(&video_id));
        for (index, frame) in generate_frames(&raster, width, height)?.into_iter().enumerate() {
            frames.push(Artifact::new(dir.join(frame_file_name(index as u64)), encode_pgm(&frame)));
        }
    }
    Ok(VideoFixture { records, annotations, frames })
}
