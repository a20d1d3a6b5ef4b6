//! Per-frame speed and acceleration derived from centroid tracks.
//!
//! Speeds are scalar magnitudes (displacement over the true frame gap);
//! acceleration is the signed finite difference of those speeds. A gap of
//! `max_gap` frames or more restarts the series so a tool that left the
//! screen does not come back with teleport kinematics.

use std::collections::BTreeMap;

use crate::detections::{Point, Role, ToolTrack};

/// Gaps of this many frames or more restart the series (about 5 s at the
/// 6 fps extraction rate).
pub const DEFAULT_MAX_GAP: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicEntry {
    pub position: Point,
    /// None at the series start and on the first sample after a long gap.
    pub speed: Option<f64>,
    /// None until two speed-bearing samples exist within `max_gap`.
    pub acceleration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSeries {
    pub video_id: String,
    pub role: Role,
    pub entries: BTreeMap<u64, KinematicEntry>,
}

impl KinematicSeries {
    pub fn speed_at(&self, frame: u64) -> Option<f64> {
        self.entries.get(&frame).and_then(|e| e.speed)
    }

    pub fn first_speed_frame(&self) -> Option<u64> {
        self.entries
            .iter()
            .find(|(_, e)| e.speed.is_some())
            .map(|(&f, _)| f)
    }

    pub fn last_speed_frame(&self) -> Option<u64> {
        self.entries
            .iter()
            .rev()
            .find(|(_, e)| e.speed.is_some())
            .map(|(&f, _)| f)
    }
}

/// speed(k) = ||c(k) − c(k_prev)|| / (k − k_prev) over consecutive present
/// frames; the first sample, and any sample following a gap of `max_gap` or
/// more frames, carries no speed.
pub fn compute_speed(track: &ToolTrack, max_gap: u64) -> KinematicSeries {
    let mut series = KinematicSeries {
        video_id: track.video_id.clone(),
        role: track.role,
        entries: BTreeMap::new(),
    };
    let mut prev: Option<(u64, Point)> = None;
    for (&frame, &position) in &track.samples {
        let speed = prev.and_then(|(pf, pp)| {
            let gap = frame - pf;
            if gap >= max_gap {
                None
            } else {
                Some(position.distance(pp) / gap as f64)
            }
        });
        series
            .entries
            .insert(frame, KinematicEntry { position, speed, acceleration: None });
        prev = Some((frame, position));
    }
    series
}

/// acceleration(k) = (speed(k) − speed(k_prev)) / (k − k_prev) over
/// consecutive speed-bearing frames, signed; the same `max_gap` restart
/// applies between speed-bearing frames.
pub fn compute_acceleration(series: &KinematicSeries, max_gap: u64) -> KinematicSeries {
    let mut out = series.clone();
    let mut prev: Option<(u64, f64)> = None;
    for (&frame, entry) in &mut out.entries {
        let Some(speed) = entry.speed else { continue };
        entry.acceleration = prev.and_then(|(pf, ps)| {
            let gap = frame - pf;
            if gap >= max_gap {
                None
            } else {
                Some((speed - ps) / gap as f64)
            }
        });
        prev = Some((frame, speed));
    }
    out
}

/// Full kinematics in one call: positions, speeds, accelerations.
pub fn compute_kinematics(track: &ToolTrack, max_gap: u64) -> KinematicSeries {
    compute_acceleration(&compute_speed(track, max_gap), max_gap)
}

/// Kinematics dump: video_id,role,frame,x,y,speed,accel with empty cells
/// for undefined values.
pub fn write_kinematics_csv(series_list: &[KinematicSeries]) -> Vec<u8> {
    let mut out = b"video_id,role,frame,x,y,speed,accel\n".to_vec();
    for series in series_list {
        for (frame, entry) in &series.entries {
            let speed = entry.speed.map(|v| v.to_string()).unwrap_or_default();
            let accel = entry.acceleration.map(|v| v.to_string()).unwrap_or_default();
            out.extend_from_slice(
                format!(
                    "{},{},{},{},{},{},{}\n",
                    series.video_id, series.role, frame, entry.position.x, entry.position.y, speed, accel
                )
                .as_bytes(),
            );
        }
    }
    out
}
