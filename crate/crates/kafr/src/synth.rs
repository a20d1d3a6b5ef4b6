//! Deterministic synthetic trajectories and grayscale frames for property
//! tests and desk-scale benchmarks. Everything is a pure function of its
//! profile; the seed steers only pixel noise, never geometry.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::detections::{DetectionRecord, Part, Point, Role, ToolTrack};
use crate::pgm::GrayFrame;
use crate::pipeline::{PhaseAnnotation, PHASE_COUNT};

/// Lehmer generator with the classic parameters: state' = state * 48271
/// mod (2^31 - 1). Published constants so fixtures are reproducible across
/// implementations; seeding follows the common convention (seed mod m,
/// zero replaced by 1).
#[derive(Debug, Clone)]
pub struct Minstd {
    state: u32,
}

impl Minstd {
    pub const MODULUS: u32 = 2_147_483_647;
    pub const MULTIPLIER: u32 = 48_271;

    pub fn new(seed: u64) -> Self {
        let state = (seed % u64::from(Self::MODULUS)) as u32;
        Minstd { state: if state == 0 { 1 } else { state } }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = ((u64::from(self.state) * u64::from(Self::MULTIPLIER))
            % u64::from(Self::MODULUS)) as u32;
        self.state
    }

    /// Uniform in [0, 1): (x - 1) / (modulus - 1) over outputs in
    /// [1, modulus - 1].
    pub fn next_f64(&mut self) -> f64 {
        f64::from(self.next_u32() - 1) / f64::from(Self::MODULUS - 1)
    }

    /// Uniform integer in [lo, hi], inclusive on both ends.
    pub fn next_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + u64::from(self.next_u32()) % (hi - lo + 1)
    }
}

/// Trajectory shape; parameters are per-frame unless noted.
#[derive(Debug, Clone, PartialEq)]
pub enum MotionKind {
    Stationary { x: f64, y: f64 },
    Linear { x0: f64, y0: f64, vx: f64, vy: f64 },
    /// Motion along x whose per-frame speed is
    /// base_speed + amplitude * sin(tau * t / period).
    SinusoidalSpeed { x0: f64, y0: f64, base_speed: f64, amplitude: f64, period: f64 },
    /// Circle of the given radius traversed once per `period` frames,
    /// starting at angle 0.
    SutureLoop { cx: f64, cy: f64, radius: f64, period: f64 },
    /// Linear motion whose samples vanish for frames in
    /// [gap_start, gap_start + gap_len).
    Dropout { x0: f64, y0: f64, vx: f64, vy: f64, gap_start: u64, gap_len: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile {
    pub video_id: String,
    pub role: Role,
    pub kind: MotionKind,
    pub duration: u64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn ensure_finite(values: &[f64]) -> Result<(), SynthError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SynthError::InvalidParams("parameters must be finite".into()));
    }
    Ok(())
}

fn validate_profile(profile: &MotionProfile) -> Result<(), SynthError> {
    if profile.duration < 1 {
        return Err(SynthError::InvalidParams("duration must be at least 1 frame".into()));
    }
    match &profile.kind {
        MotionKind::Stationary { x, y } => ensure_finite(&[*x, *y]),
        MotionKind::Linear { x0, y0, vx, vy } => ensure_finite(&[*x0, *y0, *vx, *vy]),
        MotionKind::SinusoidalSpeed { x0, y0, base_speed, amplitude, period } => {
            ensure_finite(&[*x0, *y0, *base_speed, *amplitude, *period])?;
            if *period <= 0.0 {
                return Err(SynthError::InvalidParams("period must be positive".into()));
            }
            Ok(())
        }
        MotionKind::SutureLoop { cx, cy, radius, period } => {
            ensure_finite(&[*cx, *cy, *radius, *period])?;
            if *radius <= 0.0 || *period <= 0.0 {
                return Err(SynthError::InvalidParams("radius and period must be positive".into()));
            }
            Ok(())
        }
        MotionKind::Dropout { x0, y0, vx, vy, gap_start, gap_len } => {
            ensure_finite(&[*x0, *y0, *vx, *vy])?;
            if *gap_len < 1 {
                return Err(SynthError::InvalidParams("dropout gap must cover a frame".into()));
            }
            if *gap_start == 0 && gap_start + gap_len >= profile.duration {
                return Err(SynthError::InvalidParams("dropout removes every frame".into()));
            }
            Ok(())
        }
    }
}

/// Centroid at frame t, None while a dropout gap hides the tool.
fn position_at(kind: &MotionKind, t: u64) -> Option<(f64, f64)> {
    match kind {
        MotionKind::Stationary { x, y } => Some((*x, *y)),
        MotionKind::Linear { x0, y0, vx, vy } => {
            Some((x0 + vx * t as f64, y0 + vy * t as f64))
        }
        MotionKind::SinusoidalSpeed { x0, y0, base_speed, amplitude, period } => {
            // Position is the cumulative sum of per-step speeds; the sum
            // is clearer than the closed form and durations are
            // desk-scale.
            let mut x = *x0;
            for k in 0..t {
                x += base_speed + amplitude * (TAU * k as f64 / period).sin();
            }
            Some((x, *y0))
        }
        MotionKind::SutureLoop { cx, cy, radius, period } => {
            let angle = TAU * t as f64 / period;
            Some((cx + radius * angle.cos(), cy + radius * angle.sin()))
        }
        MotionKind::Dropout { x0, y0, vx, vy, gap_start, gap_len } => {
            if (*gap_start..gap_start + gap_len).contains(&t) {
                None
            } else {
                Some((x0 + vx * t as f64, y0 + vy * t as f64))
            }
        }
    }
}

/// Deterministic centroid series for the profile; the seed plays no part.
pub fn generate_track(profile: &MotionProfile) -> Result<ToolTrack, SynthError> {
    validate_profile(profile)?;
    let mut track = ToolTrack::new(profile.video_id.clone(), profile.role);
    for t in 0..profile.duration {
        if let Some((x, y)) = position_at(&profile.kind, t) {
            track.samples.insert(t, Point { x, y });
        }
    }
    if track.samples.is_empty() {
        return Err(SynthError::InvalidParams("profile yields no samples".into()));
    }
    Ok(track)
}

/// Rendering knobs for synthetic frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    pub background: u8,
    pub block_value: u8,
    pub block_size: u32,
    /// Uniform noise in [-amplitude, +amplitude] added to background
    /// pixels; the block itself stays clean.
    pub noise_amplitude: u8,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams { background: 128, block_value: 230, block_size: 6, noise_amplitude: 6 }
    }
}

pub fn generate_frames(
    profile: &MotionProfile,
    width: usize,
    height: usize,
) -> Result<Vec<GrayFrame>, SynthError> {
    generate_frames_with(profile, width, height, FrameParams::default())
}

/// Bright square at the track position over seeded mid-gray noise. The
/// noise stream is one MINSTD sequence consumed frame by frame, so reruns
/// are byte-identical and the trajectory is seed-independent.
pub fn generate_frames_with(
    profile: &MotionProfile,
    width: usize,
    height: usize,
    params: FrameParams,
) -> Result<Vec<GrayFrame>, SynthError> {
    validate_profile(profile)?;
    if width < 8 || height < 8 {
        return Err(SynthError::InvalidParams("frame dimensions must be at least 8x8".into()));
    }
    if params.block_size < 1 {
        return Err(SynthError::InvalidParams("block size must be at least 1".into()));
    }
    if params.noise_amplitude > 127 {
        return Err(SynthError::InvalidParams("noise amplitude must be at most 127".into()));
    }
    let mut rng = Minstd::new(profile.seed);
    let mut frames = Vec::with_capacity(profile.duration as usize);
    for t in 0..profile.duration {
        let mut pixels = vec![params.background; width * height];
        if params.noise_amplitude > 0 {
            let amp = i32::from(params.noise_amplitude);
            for px in &mut pixels {
                let delta = rng.next_range(0, 2 * amp as u64) as i32 - amp;
                *px = (i32::from(params.background) + delta).clamp(0, 255) as u8;
            }
        }
        if let Some((cx, cy)) = position_at(&profile.kind, t) {
            let half = i64::from(params.block_size) / 2;
            let left = cx.round() as i64 - half;
            let top = cy.round() as i64 - half;
            for dy in 0..i64::from(params.block_size) {
                for dx in 0..i64::from(params.block_size) {
                    let (px, py) = (left + dx, top + dy);
                    if (0..width as i64).contains(&px) && (0..height as i64).contains(&py) {
                        pixels[(py * width as i64 + px) as usize] = params.block_value;
                    }
                }
            }
        }
        frames.push(
            GrayFrame::new(width, height, pixels)
                .expect("generated raster always matches its dimensions"),
        );
    }
    Ok(frames)
}

/// Canonical detection class for a tool part (the needle-driver rows of
/// the class table).
pub fn class_for_part(part: Part) -> u8 {
    match part {
        Part::Jaw => 0,
        Part::Wrist => 1,
        Part::Shaft => 2,
    }
}

/// Wrap each track sample in a square detection polygon so the stream can
/// be fed back through parsing and role assignment. Side assignment reads
/// x against the image midline, so keep the trajectory inside its role's
/// half.
pub fn detections_from_track(
    track: &ToolTrack,
    half_size: f64,
    confidence: f64,
) -> Vec<DetectionRecord> {
    track
        .samples
        .iter()
        .map(|(&frame_index, point)| DetectionRecord {
            video_id: track.video_id.clone(),
            frame_index,
            class_id: class_for_part(track.role.part()),
            confidence,
            polygon: vec![
                Point { x: point.x - half_size, y: point.y - half_size },
                Point { x: point.x + half_size, y: point.y - half_size },
                Point { x: point.x + half_size, y: point.y + half_size },
                Point { x: point.x - half_size, y: point.y + half_size },
            ],
            track_id: None,
        })
        .collect()
}

/// Annotations cycling through labels 0..6 in equal segments until the
/// duration is covered; the tail segment is truncated.
pub fn phase_cycle(
    video_id: &str,
    duration: u64,
    segment_len: u64,
) -> Result<Vec<PhaseAnnotation>, SynthError> {
    if duration < 1 || segment_len < 1 {
        return Err(SynthError::InvalidParams(
            "duration and segment length must be at least 1".into(),
        ));
    }
    let mut annotations = Vec::new();
    let mut start = 0u64;
    let mut label = 0u8;
    while start < duration {
        let end = (start + segment_len - 1).min(duration - 1);
        annotations.push(PhaseAnnotation {
            video_id: video_id.to_owned(),
            phase_label: label,
            start_frame: start,
            end_frame: end,
        });
        start = end + 1;
        label = (label + 1) % PHASE_COUNT as u8;
    }
    Ok(annotations)
}
