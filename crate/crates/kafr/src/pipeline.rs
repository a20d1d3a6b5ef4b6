//! Dataset-shaping transforms around selection: phase annotations, frame
//! manifests, per-phase rebalancing to a fixed frame budget, key-frame
//! filtering, and backward clip windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::selection::KeyFrameSet;

pub const DEFAULT_FRAMES_PER_STEP: u64 = 250;
pub const DEFAULT_CLIP_LENGTH: usize = 16;
/// Labels 0..6; 0 is idle.
pub const PHASE_COUNT: usize = 7;

/// Inclusive frame range carrying one phase label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseAnnotation {
    pub video_id: String,
    pub phase_label: u8,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl PhaseAnnotation {
    pub fn covers(&self, frame: u64) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }
}

/// Segments of one video must not overlap and labels stay in 0..6.
pub fn validate_annotations(annotations: &[PhaseAnnotation]) -> Result<(), PipelineError> {
    let mut by_video: BTreeMap<&str, Vec<&PhaseAnnotation>> = BTreeMap::new();
    for a in annotations {
        if a.phase_label as usize >= PHASE_COUNT {
            return Err(PipelineError::InvalidAnnotation(format!(
                "phase label {} out of 0..6",
                a.phase_label
            )));
        }
        if a.start_frame > a.end_frame {
            return Err(PipelineError::InvalidAnnotation(format!(
                "segment [{}, {}] is reversed",
                a.start_frame, a.end_frame
            )));
        }
        by_video.entry(a.video_id.as_str()).or_default().push(a);
    }
    for (video, mut segs) in by_video {
        segs.sort_by_key(|a| a.start_frame);
        for pair in segs.windows(2) {
            if pair[1].start_frame <= pair[0].end_frame {
                return Err(PipelineError::InvalidAnnotation(format!(
                    "video {video}: segments [{}, {}] and [{}, {}] overlap",
                    pair[0].start_frame, pair[0].end_frame, pair[1].start_frame, pair[1].end_frame
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Raw,
    Resampled,
    Selected,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Raw => "raw",
            Provenance::Resampled => "resampled",
            Provenance::Selected => "selected",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        match s {
            "raw" => Ok(Provenance::Raw),
            "resampled" => Ok(Provenance::Resampled),
            "selected" => Ok(Provenance::Selected),
            other => Err(PipelineError::InvalidFormat(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifestEntry {
    pub frame_index: u64,
    pub phase_label: u8,
    /// How many copies the trainer would consume; > 1 only after
    /// oversampling.
    pub dup_count: u64,
}

/// Ordered list of (frame, phase, duplication) rows for one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameManifest {
    pub video_id: String,
    pub entries: Vec<ManifestEntry>,
    pub provenance: Provenance,
}

impl FrameManifest {
    /// Total frames a trainer would see: duplicates expanded.
    pub fn expanded_len(&self) -> u64 {
        self.entries.iter().map(|e| e.dup_count).sum()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for pair in self.entries.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(PipelineError::InvalidFormat(format!(
                    "manifest rows out of order at frame {}",
                    pair[1].frame_index
                )));
            }
        }
        for e in &self.entries {
            if e.dup_count == 0 {
                return Err(PipelineError::InvalidFormat(format!(
                    "frame {} has dup_count 0",
                    e.frame_index
                )));
            }
            if e.phase_label as usize >= PHASE_COUNT {
                return Err(PipelineError::InvalidFormat(format!(
                    "frame {} has phase {} out of 0..6",
                    e.frame_index, e.phase_label
                )));
            }
        }
        Ok(())
    }
}

/// Clip of exactly `clip_length` manifest frames ending at `end_frame`,
/// built by walking backward and left-padding with the earliest entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipWindow {
    pub video_id: String,
    pub end_frame: u64,
    pub members: Vec<u64>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("video {video_id}: frame {frame} is outside every annotation segment")]
    UncoveredFrame { video_id: String, frame: u64 },
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("inputs are for different videos: {0:?} vs {1:?}")]
    VideoMismatch(String, String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("bad file format: {0}")]
    InvalidFormat(String),
}

/// Raw manifest enumerating every annotated frame of one video, dup 1.
pub fn manifest_from_annotations(
    video_id: &str,
    annotations: &[PhaseAnnotation],
) -> Result<FrameManifest, PipelineError> {
    validate_annotations(annotations)?;
    let mut segs: Vec<&PhaseAnnotation> =
        annotations.iter().filter(|a| a.video_id == video_id).collect();
    segs.sort_by_key(|a| a.start_frame);
    let mut entries = Vec::new();
    for seg in segs {
        for frame_index in seg.start_frame..=seg.end_frame {
            entries.push(ManifestEntry {
                frame_index,
                phase_label: seg.phase_label,
                dup_count: 1,
            });
        }
    }
    Ok(FrameManifest { video_id: video_id.to_owned(), entries, provenance: Provenance::Raw })
}

/// Drop every entry covered by an idle (label 0) segment; the annotations
/// themselves decide idleness, not the entry labels.
pub fn exclude_idle(manifest: &FrameManifest, annotations: &[PhaseAnnotation]) -> FrameManifest {
    let idle: Vec<&PhaseAnnotation> = annotations
        .iter()
        .filter(|a| a.video_id == manifest.video_id && a.phase_label == 0)
        .collect();
    FrameManifest {
        video_id: manifest.video_id.clone(),
        entries: manifest
            .entries
            .iter()
            .filter(|e| !idle.iter().any(|seg| seg.covers(e.frame_index)))
            .copied()
            .collect(),
        provenance: manifest.provenance,
    }
}

/// Rebalance every covered segment to exactly `frames_per_step` expanded
/// frames: undersample by the uniform index formula, oversample by
/// round-robin duplication. Segments holding no manifest rows contribute
/// nothing; segments a row fails to land in are an error.
pub fn resample_phases(
    manifest: &FrameManifest,
    annotations: &[PhaseAnnotation],
    frames_per_step: u64,
) -> Result<FrameManifest, PipelineError> {
    if frames_per_step < 1 {
        return Err(PipelineError::InvalidParam("frames_per_step must be at least 1".into()));
    }
    validate_annotations(annotations)?;
    let mut segs: Vec<&PhaseAnnotation> = annotations
        .iter()
        .filter(|a| a.video_id == manifest.video_id)
        .collect();
    segs.sort_by_key(|a| a.start_frame);

    // Bucket rows by covering segment; rows and segments are both ordered.
    let mut groups: Vec<Vec<ManifestEntry>> = vec![Vec::new(); segs.len()];
    let mut seg_pos = 0usize;
    for entry in &manifest.entries {
        while seg_pos < segs.len() && segs[seg_pos].end_frame < entry.frame_index {
            seg_pos += 1;
        }
        if seg_pos >= segs.len() || !segs[seg_pos].covers(entry.frame_index) {
            return Err(PipelineError::UncoveredFrame {
                video_id: manifest.video_id.clone(),
                frame: entry.frame_index,
            });
        }
        groups[seg_pos].push(*entry);
    }

    let mut entries = Vec::new();
    for group in groups {
        if group.is_empty() {
            continue;
        }
        let expanded: u64 = group.iter().map(|e| e.dup_count).sum();
        let rows = group.len() as u64;
        if expanded == frames_per_step {
            entries.extend(group);
        } else if rows >= frames_per_step {
            // Uniform undersample over the rows, duplication flattened.
            let m = frames_per_step;
            let mut indices: Vec<u64> = if m == 1 {
                vec![0]
            } else {
                (0..m)
                    .map(|t| (t as f64 * (rows - 1) as f64 / (m - 1) as f64).round() as u64)
                    .collect()
            };
            indices.dedup();
            for i in indices {
                entries.push(ManifestEntry { dup_count: 1, ..group[i as usize] });
            }
        } else {
            // Oversample: flatten, then hand out the deficit round-robin so
            // the first (deficit mod rows) rows carry one extra copy.
            let deficit = frames_per_step - rows;
            let base = deficit / rows;
            let extra = deficit % rows;
            for (i, entry) in group.iter().enumerate() {
                let dup_count = 1 + base + u64::from((i as u64) < extra);
                entries.push(ManifestEntry { dup_count, ..*entry });
            }
        }
    }
    Ok(FrameManifest {
        video_id: manifest.video_id.clone(),
        entries,
        provenance: Provenance::Resampled,
    })
}

/// Keep only the rows whose frame is in the key set; duplication counts
/// survive untouched.
pub fn apply_selection(
    manifest: &FrameManifest,
    keyframes: &KeyFrameSet,
) -> Result<FrameManifest, PipelineError> {
    if manifest.video_id != keyframes.video_id {
        return Err(PipelineError::VideoMismatch(
            manifest.video_id.clone(),
            keyframes.video_id.clone(),
        ));
    }
    let selected: std::collections::BTreeSet<u64> = keyframes.selected.iter().copied().collect();
    Ok(FrameManifest {
        video_id: manifest.video_id.clone(),
        entries: manifest
            .entries
            .iter()
            .filter(|e| selected.contains(&e.frame_index))
            .copied()
            .collect(),
        provenance: Provenance::Selected,
    })
}

/// One clip per expanded manifest entry (a row duplicated n times yields n
/// windows): the entry plus the clip_length − 1 preceding expanded entries,
/// left-padded by repeating the earliest entry.
pub fn build_clips(
    manifest: &FrameManifest,
    clip_length: usize,
) -> Result<Vec<ClipWindow>, PipelineError> {
    if clip_length < 1 {
        return Err(PipelineError::InvalidParam("clip_length must be at least 1".into()));
    }
    if manifest.entries.is_empty() {
        return Err(PipelineError::EmptyManifest);
    }
    let mut expanded = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        for _ in 0..entry.dup_count {
            expanded.push(entry.frame_index);
        }
    }
    let mut clips = Vec::with_capacity(expanded.len());
    for (i, &end_frame) in expanded.iter().enumerate() {
        let mut members = Vec::with_capacity(clip_length);
        for offset in (0..clip_length).rev() {
            let index = i.saturating_sub(offset);
            members.push(expanded[index]);
        }
        clips.push(ClipWindow { video_id: manifest.video_id.clone(), end_frame, members });
    }
    Ok(clips)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReduction {
    pub phase: u8,
    pub before: u64,
    pub after: u64,
    pub filtered_pct: f64,
}

/// Before/after frame accounting; counts are expanded (duplicates included).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub video_id: String,
    pub before_frames: u64,
    pub after_frames: u64,
    pub filtered_pct: f64,
    /// before/after; None when nothing survived.
    pub reduction_factor: Option<f64>,
    pub duplicates_before: u64,
    pub duplicates_after: u64,
    pub per_phase: Vec<PhaseReduction>,
}

pub fn reduction_report(
    before: &FrameManifest,
    after: &FrameManifest,
) -> Result<ReductionReport, PipelineError> {
    if before.video_id != after.video_id {
        return Err(PipelineError::VideoMismatch(before.video_id.clone(), after.video_id.clone()));
    }
    let mut per_phase: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
    for e in &before.entries {
        per_phase.entry(e.phase_label).or_default().0 += e.dup_count;
    }
    for e in &after.entries {
        per_phase.entry(e.phase_label).or_default().1 += e.dup_count;
    }
    let before_frames = before.expanded_len();
    let after_frames = after.expanded_len();
    let pct = |b: u64, a: u64| {
        if b == 0 {
            0.0
        } else {
            (1.0 - a as f64 / b as f64) * 100.0
        }
    };
    Ok(ReductionReport {
        video_id: before.video_id.clone(),
        before_frames,
        after_frames,
        filtered_pct: pct(before_frames, after_frames),
        reduction_factor: (after_frames > 0).then(|| before_frames as f64 / after_frames as f64),
        duplicates_before: before_frames - before.entries.len() as u64,
        duplicates_after: after_frames - after.entries.len() as u64,
        per_phase: per_phase
            .into_iter()
            .map(|(phase, (b, a))| PhaseReduction { phase, before: b, after: a, filtered_pct: pct(b, a) })
            .collect(),
    })
}

const PHASE_CSV_HEADER: &str = "video_id,phase_label,start_frame,end_frame";
const MANIFEST_CSV_HEADER: &str = "video_id,frame,phase,dup_count,provenance";

pub fn write_phase_csv(annotations: &[PhaseAnnotation]) -> Vec<u8> {
    let mut out = format!("{PHASE_CSV_HEADER}\n").into_bytes();
    for a in annotations {
        out.extend_from_slice(
            format!("{},{},{},{}\n", a.video_id, a.phase_label, a.start_frame, a.end_frame).as_bytes(),
        );
    }
    out
}

pub fn read_phase_csv(bytes: &[u8]) -> Result<Vec<PhaseAnnotation>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| PipelineError::InvalidFormat(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != PHASE_CSV_HEADER {
        return Err(PipelineError::InvalidFormat(format!(
            "phase CSV header must be {PHASE_CSV_HEADER:?}, got {header:?}"
        )));
    }
    let mut annotations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PipelineError::InvalidFormat(e.to_string()))?;
        let field = |i: usize, name: &str| -> Result<&str, PipelineError> {
            record
                .get(i)
                .ok_or_else(|| PipelineError::InvalidFormat(format!("missing {name}")))
        };
        annotations.push(PhaseAnnotation {
            video_id: field(0, "video_id")?.to_owned(),
            phase_label: field(1, "phase_label")?
                .parse()
                .map_err(|e| PipelineError::InvalidFormat(format!("phase_label: {e}")))?,
            start_frame: field(2, "start_frame")?
                .parse()
                .map_err(|e| PipelineError::InvalidFormat(format!("start_frame: {e}")))?,
            end_frame: field(3, "end_frame")?
                .parse()
                .map_err(|e| PipelineError::InvalidFormat(format!("end_frame: {e}")))?,
        });
    }
    validate_annotations(&annotations)?;
    Ok(annotations)
}

pub fn write_manifest_csv(manifests: &[FrameManifest]) -> Vec<u8> {
    let mut out = format!("{MANIFEST_CSV_HEADER}\n").into_bytes();
    for m in manifests {
        for e in &m.entries {
            out.extend_from_slice(
                format!(
                    "{},{},{},{},{}\n",
                    m.video_id,
                    e.frame_index,
                    e.phase_label,
                    e.dup_count,
                    m.provenance.as_str()
                )
                .as_bytes(),
            );
        }
    }
    out
}

/// Reads manifests grouped by video in row order; provenance must be
/// uniform within a video.
pub fn read_manifest_csv(bytes: &[u8]) -> Result<Vec<FrameManifest>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| PipelineError::InvalidFormat(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != MANIFEST_CSV_HEADER {
        return Err(PipelineError::InvalidFormat(format!(
            "manifest CSV header must be {MANIFEST_CSV_HEADER:?}, got {header:?}"
        )));
    }
    let mut manifests: Vec<FrameManifest> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PipelineError::InvalidFormat(e.to_string()))?;
        if record.len() != 5 {
            return Err(PipelineError::InvalidFormat(format!(
                "expected 5 fields, got {}",
                record.len()
            )));
        }
        let video_id = record[0].to_owned();
        let entry = ManifestEntry {
            frame_index: record[1]
                .parse()
                .map_err(|e| PipelineError::InvalidFormat(format!("frame: {e}")))?,
            phase_label: record[2]
                .parse()
                .map_err(|e| PipelineError::InvalidFormat(format!("phase: {e}")))?,
            dup_count: record[3]
                .parse()
                .map_err(|e| PipelineError::InvalidFormat(format!("dup_count: {e}")))?,
        };
        let provenance = Provenance::parse(&record[4])?;
        match manifests.last_mut() {
            Some(m) if m.video_id == video_id => {
                if m.provenance != provenance {
                    return Err(PipelineError::InvalidFormat(format!(
                        "video {video_id} mixes provenance values"
                    )));
                }
                m.entries.push(entry);
            }
            _ => manifests.push(FrameManifest { video_id, entries: vec![entry], provenance }),
        }
    }
    for m in &manifests {
        m.validate()?;
    }
    Ok(manifests)
}

/// Wire shape for clip JSONL rows; field order is the key order.
#[derive(Serialize, Deserialize)]
struct WireClip {
    video_id: String,
    end: u64,
    members: Vec<u64>,
}

pub fn write_clips_jsonl(clips: &[ClipWindow]) -> Vec<u8> {
    let mut out = Vec::new();
    for clip in clips {
        let wire = WireClip {
            video_id: clip.video_id.clone(),
            end: clip.end_frame,
            members: clip.members.clone(),
        };
        out.extend_from_slice(serde_json::to_string(&wire).expect("clip serializes").as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn read_clips_jsonl(bytes: &[u8]) -> Result<Vec<ClipWindow>, PipelineError> {
    let mut clips = Vec::new();
    for (idx, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let wire: WireClip = serde_json::from_slice(line)
            .map_err(|e| PipelineError::InvalidFormat(format!("clip line {}: {e}", idx + 1)))?;
        clips.push(ClipWindow {
            video_id: wire.video_id,
            end_frame: wire.end,
            members: wire.members,
        });
    }
    Ok(clips)
}
