//! Detection-stream ingest: parse and validate per-frame tool detections,
//! then reduce them to role-assigned centroid tracks.
//!
//! Records carry raw detector class IDs from a 16-entry catalog. Needle
//! drivers appear twice in that catalog (IDs 0..2 and 3..5), so IDs 3, 4, 5
//! fold into 2, 1, 0 before any downstream use. `assign_roles` then splits
//! each tracked part into Left/Right tracks by which half of the image its
//! centroid falls in.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default confidence cut: detections at or below this are dropped.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

/// Polygons whose absolute shoelace sum (twice the signed area) falls below
/// this are rejected as degenerate; an exact-zero test would let
/// near-collinear rings produce unbounded centroids.
pub const DEGENERATE_AREA_EPS: f64 = 1e-12;

/// 2-D pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance. Written as sqrt(dx² + dy²) rather than `hypot`
    /// so that scaling both points by a power of two scales the result
    /// exactly (selection's scale/threshold duality depends on it).
    pub fn distance(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Instrument part by catalog suffix: part 1 = jaws, part 2 = wrist,
/// part 3 = shaft.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    Jaw,
    Wrist,
    Shaft,
}

/// Screen half; the boundary column x = width/2 belongs to the right half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Canonical identity of a tracked needle-driver part. Declaration order is
/// the listing order wherever tracks are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    LeftJaw,
    RightJaw,
    LeftWrist,
    RightWrist,
    LeftShaft,
    RightShaft,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::LeftJaw,
        Role::RightJaw,
        Role::LeftWrist,
        Role::RightWrist,
        Role::LeftShaft,
        Role::RightShaft,
    ];

    pub fn part(self) -> Part {
        match self {
            Role::LeftJaw | Role::RightJaw => Part::Jaw,
            Role::LeftWrist | Role::RightWrist => Part::Wrist,
            Role::LeftShaft | Role::RightShaft => Part::Shaft,
        }
    }

    pub fn side(self) -> Side {
        match self {
            Role::LeftJaw | Role::LeftWrist | Role::LeftShaft => Side::Left,
            Role::RightJaw | Role::RightWrist | Role::RightShaft => Side::Right,
        }
    }

    pub fn from_part_side(part: Part, side: Side) -> Role {
        match (part, side) {
            (Part::Jaw, Side::Left) => Role::LeftJaw,
            (Part::Jaw, Side::Right) => Role::RightJaw,
            (Part::Wrist, Side::Left) => Role::LeftWrist,
            (Part::Wrist, Side::Right) => Role::RightWrist,
            (Part::Shaft, Side::Left) => Role::LeftShaft,
            (Part::Shaft, Side::Right) => Role::RightShaft,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::LeftJaw => "left_jaw",
            Role::RightJaw => "right_jaw",
            Role::LeftWrist => "left_wrist",
            Role::RightWrist => "right_wrist",
            Role::LeftShaft => "left_shaft",
            Role::RightShaft => "right_shaft",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

/// Named role subsets: one = right jaw only, two = both jaws,
/// four = jaws + wrists, six = every part of both needle drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolePreset {
    One,
    Two,
    Four,
    Six,
}

impl RolePreset {
    pub fn roles(self) -> Vec<Role> {
        match self {
            RolePreset::One => vec![Role::RightJaw],
            RolePreset::Two => vec![Role::LeftJaw, Role::RightJaw],
            RolePreset::Four => vec![
                Role::LeftJaw,
                Role::RightJaw,
                Role::LeftWrist,
                Role::RightWrist,
            ],
            RolePreset::Six => Role::ALL.to_vec(),
        }
    }

    /// Distinct parts covered by the preset, for `assign_roles`.
    pub fn parts(self) -> Vec<Part> {
        match self {
            RolePreset::One | RolePreset::Two => vec![Part::Jaw],
            RolePreset::Four => vec![Part::Jaw, Part::Wrist],
            RolePreset::Six => vec![Part::Jaw, Part::Wrist, Part::Shaft],
        }
    }
}

impl FromStr for RolePreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" => Ok(RolePreset::One),
            "two" => Ok(RolePreset::Two),
            "four" => Ok(RolePreset::Four),
            "six" => Ok(RolePreset::Six),
            other => Err(format!("unknown objects preset {other:?} (expected one|two|four|six)")),
        }
    }
}

/// One row of the detector's 16-class catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogEntry {
    pub class_id: u8,
    pub instrument: &'static str,
    pub tool_name: &'static str,
    /// None for the partless laptool.
    pub part: Option<Part>,
    /// IDs 3, 4, 5 fold into 2, 1, 0 (the two needle drivers are the same
    /// instrument); every other ID maps to itself.
    pub canonical_id: u8,
}

pub const TOOL_CATALOG: [CatalogEntry; 16] = [
    CatalogEntry { class_id: 0, instrument: "instrument3part1", tool_name: "Needle Driver", part: Some(Part::Jaw), canonical_id: 0 },
    CatalogEntry { class_id: 1, instrument: "instrument3part2", tool_name: "Needle Driver", part: Some(Part::Wrist), canonical_id: 1 },
    CatalogEntry { class_id: 2, instrument: "instrument3part3", tool_name: "Needle Driver", part: Some(Part::Shaft), canonical_id: 2 },
    CatalogEntry { class_id: 3, instrument: "instrument2part3", tool_name: "Needle Driver", part: Some(Part::Shaft), canonical_id: 2 },
    CatalogEntry { class_id: 4, instrument: "instrument2part2", tool_name: "Needle Driver", part: Some(Part::Wrist), canonical_id: 1 },
    CatalogEntry { class_id: 5, instrument: "instrument2part1", tool_name: "Needle Driver", part: Some(Part::Jaw), canonical_id: 0 },
    CatalogEntry { class_id: 6, instrument: "laptool", tool_name: "Irrigator", part: None, canonical_id: 6 },
    CatalogEntry { class_id: 7, instrument: "instrument4part1", tool_name: "Forcep", part: Some(Part::Jaw), canonical_id: 7 },
    CatalogEntry { class_id: 8, instrument: "instrument1part1", tool_name: "Grasper", part: Some(Part::Jaw), canonical_id: 8 },
    CatalogEntry { class_id: 9, instrument: "instrument1part2", tool_name: "Grasper", part: Some(Part::Wrist), canonical_id: 9 },
    CatalogEntry { class_id: 10, instrument: "instrument1part3", tool_name: "Grasper", part: Some(Part::Shaft), canonical_id: 10 },
    CatalogEntry { class_id: 11, instrument: "instrument4part2", tool_name: "Forcep", part: Some(Part::Wrist), canonical_id: 11 },
    CatalogEntry { class_id: 12, instrument: "instrument5part3", tool_name: "Monopolar Curved Scissors", part: Some(Part::Shaft), canonical_id: 12 },
    CatalogEntry { class_id: 13, instrument: "instrument5part2", tool_name: "Monopolar Curved Scissors", part: Some(Part::Wrist), canonical_id: 13 },
    CatalogEntry { class_id: 14, instrument: "instrument5part1", tool_name: "Monopolar Curved Scissors", part: Some(Part::Jaw), canonical_id: 14 },
    CatalogEntry { class_id: 15, instrument: "instrument4part3", tool_name: "Forcep", part: Some(Part::Shaft), canonical_id: 15 },
];

pub fn catalog_entry(class_id: u8) -> Option<&'static CatalogEntry> {
    TOOL_CATALOG.get(usize::from(class_id))
}

pub fn canonical_class(class_id: u8) -> Option<u8> {
    catalog_entry(class_id).map(|e| e.canonical_id)
}

/// Part tracked by selection for a raw class id; needle drivers only
/// (canonical IDs 0..2), everything else is None.
pub fn needle_driver_part(class_id: u8) -> Option<Part> {
    match canonical_class(class_id)? {
        0 => Some(Part::Jaw),
        1 => Some(Part::Wrist),
        2 => Some(Part::Shaft),
        _ => None,
    }
}

/// Tool-part polygon detected in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub class_id: u8,
    pub confidence: f64,
    pub polygon: Vec<Point>,
    pub track_id: Option<u64>,
}

/// Per-role centroid time series; frames with no qualifying detection are
/// simply absent (a gap).
#[derive(Debug, Clone, PartialEq)]
pub struct ToolTrack {
    pub video_id: String,
    pub role: Role,
    pub samples: BTreeMap<u64, Point>,
}

impl ToolTrack {
    pub fn new(video_id: impl Into<String>, role: Role) -> Self {
        Self {
            video_id: video_id.into(),
            role,
            samples: BTreeMap::new(),
        }
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.samples.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.samples.keys().next_back().copied()
    }
}

/// Stream-level failures; per-line problems are reported as [`ParseIssue`]s
/// instead so one bad line does not discard the rest of the stream.
#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("empty detection stream")]
    EmptyStream,
    #[error("detection CSV header must be {expected:?}, got {got:?}")]
    BadHeader { expected: &'static str, got: String },
    #[error("polygon is degenerate (fewer than 3 vertices or zero area)")]
    DegeneratePolygon,
    #[error("failed to read detection stream: {0}")]
    Io(#[from] std::io::Error),
}

/// One skipped input line, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseIssue {
    Malformed {
        line: u64,
        field: &'static str,
        detail: String,
    },
    UnknownClassId {
        line: u64,
        class_id: i64,
    },
}

impl ParseIssue {
    pub fn line(&self) -> u64 {
        match self {
            ParseIssue::Malformed { line, .. } | ParseIssue::UnknownClassId { line, .. } => *line,
        }
    }
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseIssue::Malformed { line, field, detail } => {
                write!(f, "line {line}: malformed field {field:?}: {detail}")
            }
            ParseIssue::UnknownClassId { line, class_id } => {
                write!(f, "line {line}: class_id {class_id} is not in the 16-ID catalog")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionFormat {
    Jsonl,
    Csv,
}

/// Parse result: valid records in (video_id, frame_index) order plus one
/// issue per skipped line.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<DetectionRecord>,
    pub issues: Vec<ParseIssue>,
}

/// JSONL wire shape; field order here fixes the serialized key order.
#[derive(Serialize, Deserialize)]
struct WireDetection {
    video_id: String,
    frame: u64,
    class_id: u8,
    conf: f64,
    polygon: Vec<[f64; 2]>,
    track_id: Option<u64>,
}

const CSV_HEADER: &str = "video_id,frame,class_id,conf,track_id,polygon";

/// Parse a detection stream. Malformed lines are collected as issues with
/// their line numbers; only an entirely record-free stream is an error.
pub fn parse_detections(
    stream: &[u8],
    format: DetectionFormat,
) -> Result<ParseOutcome, DetectionError> {
    let mut outcome = match format {
        DetectionFormat::Jsonl => parse_jsonl(stream)?,
        DetectionFormat::Csv => parse_csv(stream)?,
    };
    // Stable: input order is preserved within one (video, frame) pair, which
    // the duplicate-resolution tie rule in assign_roles relies on.
    outcome
        .records
        .sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));
    Ok(outcome)
}

fn parse_jsonl(stream: &[u8]) -> Result<ParseOutcome, DetectionError> {
    let mut outcome = ParseOutcome::default();
    let mut saw_line = false;
    for (idx, raw) in stream.split(|&b| b == b'\n').enumerate() {
        let line = idx as u64 + 1;
        let raw = match raw.strip_suffix(b"\r") {
            Some(r) => r,
            None => raw,
        };
        if raw.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        saw_line = true;
        let text = match std::str::from_utf8(raw) {
            Ok(t) => t,
            Err(e) => {
                outcome.issues.push(ParseIssue::Malformed {
                    line,
                    field: "line",
                    detail: format!("invalid UTF-8: {e}"),
                });
                continue;
            }
        };
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                outcome.issues.push(ParseIssue::Malformed {
                    line,
                    field: "json",
                    detail: e.to_string(),
                });
                continue;
            }
        };
        match record_from_json(&value, line) {
            Ok(record) => outcome.records.push(record),
            Err(issue) => outcome.issues.push(issue),
        }
    }
    if !saw_line {
        return Err(DetectionError::EmptyStream);
    }
    Ok(outcome)
}

fn record_from_json(value: &serde_json::Value, line: u64) -> Result<DetectionRecord, ParseIssue> {
    let obj = value
        .as_object()
        .ok_or(ParseIssue::Malformed { line, field: "json", detail: "not an object".into() })?;
    let field = |name: &'static str| {
        obj.get(name)
            .ok_or(ParseIssue::Malformed { line, field: name, detail: "missing".into() })
    };
    let malformed = |name: &'static str, detail: &str| ParseIssue::Malformed {
        line,
        field: name,
        detail: detail.into(),
    };

    let video_id = field("video_id")?
        .as_str()
        .ok_or_else(|| malformed("video_id", "expected string"))?
        .to_owned();
    let frame_index = field("frame")?
        .as_u64()
        .ok_or_else(|| malformed("frame", "expected non-negative integer"))?;
    let class_raw = field("class_id")?
        .as_i64()
        .ok_or_else(|| malformed("class_id", "expected integer"))?;
    let class_id = match u8::try_from(class_raw).ok().filter(|c| catalog_entry(*c).is_some()) {
        Some(c) => c,
        None => return Err(ParseIssue::UnknownClassId { line, class_id: class_raw }),
    };
    let confidence = field("conf")?
        .as_f64()
        .ok_or_else(|| malformed("conf", "expected number"))?;
    validate_confidence(confidence).map_err(|d| malformed("conf", &d))?;
    let polygon_val = field("polygon")?
        .as_array()
        .ok_or_else(|| malformed("polygon", "expected array of [x,y] pairs"))?;
    let mut polygon = Vec::with_capacity(polygon_val.len());
    for vertex in polygon_val {
        let pair = vertex
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| malformed("polygon", "vertex is not an [x,y] pair"))?;
        let x = pair[0].as_f64().ok_or_else(|| malformed("polygon", "x is not a number"))?;
        let y = pair[1].as_f64().ok_or_else(|| malformed("polygon", "y is not a number"))?;
        polygon.push(Point::new(x, y));
    }
    validate_polygon(&polygon).map_err(|d| malformed("polygon", &d))?;
    let track_id = match obj.get("track_id") {
        None | Some(serde_json::Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| malformed("track_id", "expected non-negative integer or null"))?,
        ),
    };

    Ok(DetectionRecord { video_id, frame_index, class_id, confidence, polygon, track_id })
}

fn parse_csv(stream: &[u8]) -> Result<ParseOutcome, DetectionError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(stream);
    let header = reader
        .headers()
        .map_err(|_| DetectionError::EmptyStream)?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header.is_empty() {
        return Err(DetectionError::EmptyStream);
    }
    if header != CSV_HEADER {
        return Err(DetectionError::BadHeader { expected: CSV_HEADER, got: header });
    }

    let mut outcome = ParseOutcome::default();
    let mut saw_record = false;
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                outcome.issues.push(ParseIssue::Malformed {
                    line,
                    field: "line",
                    detail: e.to_string(),
                });
                saw_record = true;
                continue;
            }
        };
        saw_record = true;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match record_from_csv(&record, line) {
            Ok(r) => outcome.records.push(r),
            Err(issue) => outcome.issues.push(issue),
        }
    }
    if !saw_record {
        return Err(DetectionError::EmptyStream);
    }
    Ok(outcome)
}

fn record_from_csv(record: &csv::StringRecord, line: u64) -> Result<DetectionRecord, ParseIssue> {
    let malformed = |name: &'static str, detail: String| ParseIssue::Malformed {
        line,
        field: name,
        detail,
    };
    if record.len() != 6 {
        return Err(malformed("line", format!("expected 6 fields, got {}", record.len())));
    }

    let video_id = record[0].to_owned();
    let frame_index: u64 = record[1]
        .parse()
        .map_err(|e| malformed("frame", format!("{e}")))?;
    let class_raw: i64 = record[2]
        .parse()
        .map_err(|e| malformed("class_id", format!("{e}")))?;
    let class_id = match u8::try_from(class_raw).ok().filter(|c| catalog_entry(*c).is_some()) {
        Some(c) => c,
        None => return Err(ParseIssue::UnknownClassId { line, class_id: class_raw }),
    };
    let confidence: f64 = record[3]
        .parse()
        .map_err(|e| malformed("conf", format!("{e}")))?;
    validate_confidence(confidence).map_err(|d| malformed("conf", d))?;
    let track_id = if record[4].is_empty() {
        None
    } else {
        Some(record[4].parse::<u64>().map_err(|e| malformed("track_id", format!("{e}")))?)
    };
    let mut polygon = Vec::new();
    for pair in record[5].split(';') {
        let (x, y) = pair
            .split_once(':')
            .ok_or_else(|| malformed("polygon", format!("vertex {pair:?} is not x:y")))?;
        let x: f64 = x.trim().parse().map_err(|e| malformed("polygon", format!("{e}")))?;
        let y: f64 = y.trim().parse().map_err(|e| malformed("polygon", format!("{e}")))?;
        polygon.push(Point::new(x, y));
    }
    validate_polygon(&polygon).map_err(|d| malformed("polygon", d))?;

    Ok(DetectionRecord { video_id, frame_index, class_id, confidence, polygon, track_id })
}

fn validate_confidence(conf: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&conf) {
        Ok(())
    } else {
        Err(format!("confidence {conf} outside [0, 1]"))
    }
}

fn validate_polygon(polygon: &[Point]) -> Result<(), String> {
    if polygon.len() < 3 {
        return Err(format!("{} vertices, need at least 3", polygon.len()));
    }
    if shoelace_sum(polygon).abs() < DEGENERATE_AREA_EPS {
        return Err("zero shoelace area".into());
    }
    Ok(())
}

/// Serialize records to the given wire format; `parse_detections` of the
/// output yields the same records.
pub fn serialize_detections(records: &[DetectionRecord], format: DetectionFormat) -> Vec<u8> {
    match format {
        DetectionFormat::Jsonl => {
            let mut out = Vec::new();
            for r in records {
                let wire = WireDetection {
                    video_id: r.video_id.clone(),
                    frame: r.frame_index,
                    class_id: r.class_id,
                    conf: r.confidence,
                    polygon: r.polygon.iter().map(|p| [p.x, p.y]).collect(),
                    track_id: r.track_id,
                };
                out.extend_from_slice(serde_json::to_string(&wire).expect("serializable").as_bytes());
                out.push(b'\n');
            }
            out
        }
        DetectionFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER.split(',')).expect("csv header");
            for r in records {
                let polygon = r
                    .polygon
                    .iter()
                    .map(|p| format!("{}:{}", p.x, p.y))
                    .collect::<Vec<_>>()
                    .join(";");
                let track = r.track_id.map(|t| t.to_string()).unwrap_or_default();
                w.write_record([
                    r.video_id.as_str(),
                    &r.frame_index.to_string(),
                    &r.class_id.to_string(),
                    &r.confidence.to_string(),
                    &track,
                    &polygon,
                ])
                .expect("csv record");
            }
            w.into_inner().expect("csv flush")
        }
    }
}

/// Keep exactly the records with confidence strictly greater than
/// `min_conf`, preserving order.
pub fn filter_confidence(records: &[DetectionRecord], min_conf: f64) -> Vec<DetectionRecord> {
    records
        .iter()
        .filter(|r| r.confidence > min_conf)
        .cloned()
        .collect()
}

fn shoelace_sum(polygon: &[Point]) -> f64 {
    let mut sum = 0.0;
    for i in 0..polygon.len() {
        let p = polygon[i];
        let q = polygon[(i + 1) % polygon.len()];
        sum += p.x * q.y - q.x * p.y;
    }
    sum
}

/// Area centroid of a simple polygon via the shoelace formulation. Signed
/// terms cancel correctly for either winding order.
pub fn polygon_centroid(polygon: &[Point]) -> Result<Point, DetectionError> {
    if polygon.len() < 3 {
        return Err(DetectionError::DegeneratePolygon);
    }
    let mut twice_area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..polygon.len() {
        let p = polygon[i];
        let q = polygon[(i + 1) % polygon.len()];
        let cross = p.x * q.y - q.x * p.y;
        twice_area += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    if twice_area.abs() < DEGENERATE_AREA_EPS {
        return Err(DetectionError::DegeneratePolygon);
    }
    Ok(Point::new(cx / (3.0 * twice_area), cy / (3.0 * twice_area)))
}

/// Split needle-driver detections into per-role centroid tracks.
///
/// Side rule: centroid x < width/2 is Left, x ≥ width/2 is Right. When two
/// detections compete for one (frame, role) slot, the higher confidence
/// wins; equal confidences keep the record that appeared first in the input.
/// Records that are not needle-driver parts in `parts_wanted`, or whose
/// polygon is degenerate, are skipped (those frames are gaps). The result
/// holds one track per (video, wanted part, side), empty tracks included,
/// ordered by video then role.
pub fn assign_roles(
    records: &[DetectionRecord],
    image_width: f64,
    parts_wanted: &[Part],
) -> Vec<ToolTrack> {
    debug_assert!(image_width > 0.0, "image width must be positive");
    // (video, role, frame) -> (confidence, input index, centroid)
    let mut best: BTreeMap<(&str, Role, u64), (f64, usize, Point)> = BTreeMap::new();
    let mut videos: Vec<&str> = Vec::new();

    for (idx, record) in records.iter().enumerate() {
        if !videos.contains(&record.video_id.as_str()) {
            videos.push(&record.video_id);
        }
        let part = match needle_driver_part(record.class_id) {
            Some(p) if parts_wanted.contains(&p) => p,
            _ => continue,
        };
        let centroid = match polygon_centroid(&record.polygon) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let side = if centroid.x < image_width / 2.0 { Side::Left } else { Side::Right };
        let role = Role::from_part_side(part, side);
        let key = (record.video_id.as_str(), role, record.frame_index);
        match best.get(&key) {
            Some(&(conf, first_idx, _)) if conf > record.confidence || (conf == record.confidence && first_idx < idx) => {}
            _ => {
                best.insert(key, (record.confidence, idx, centroid));
            }
        }
    }

    videos.sort_unstable();
    let mut wanted_roles: Vec<Role> = Role::ALL
        .into_iter()
        .filter(|r| parts_wanted.contains(&r.part()))
        .collect();
    wanted_roles.sort();

    let mut tracks = Vec::new();
    for video in videos {
        for &role in &wanted_roles {
            let mut track = ToolTrack::new(video, role);
            let lo = (video, role, 0u64);
            let hi = (video, role, u64::MAX);
            for (&(_, _, frame), &(_, _, point)) in best.range(lo..=hi) {
                track.samples.insert(frame, point);
            }
            tracks.push(track);
        }
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(video: &str, frame: u64, class_id: u8, conf: f64, polygon: &[(f64, f64)]) -> DetectionRecord {
        DetectionRecord {
            video_id: video.into(),
            frame_index: frame,
            class_id,
            confidence: conf,
            polygon: polygon.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            track_id: None,
        }
    }

    fn square_at(x: f64, y: f64) -> Vec<(f64, f64)> {
        vec![(x - 1.0, y - 1.0), (x + 1.0, y - 1.0), (x + 1.0, y + 1.0), (x - 1.0, y + 1.0)]
    }

    #[test]
    fn catalog_merges_duplicate_needle_driver() {
        assert_eq!(canonical_class(3), Some(2));
        assert_eq!(canonical_class(4), Some(1));
        assert_eq!(canonical_class(5), Some(0));
        for id in [0u8, 1, 2, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15] {
            assert_eq!(canonical_class(id), Some(id));
        }
        assert_eq!(canonical_class(16), None);
        assert_eq!(catalog_entry(6).unwrap().part, None);
        assert_eq!(catalog_entry(6).unwrap().tool_name, "Irrigator");
        assert_eq!(needle_driver_part(5), Some(Part::Jaw));
        assert_eq!(needle_driver_part(3), Some(Part::Shaft));
        assert_eq!(needle_driver_part(7), None);
    }

    #[test]
    fn parse_single_valid_jsonl_line() {
        let line = br#"{"video_id":"v1","frame":12,"class_id":0,"conf":0.9,"polygon":[[0,0],[2,0],[2,2],[0,2]],"track_id":3}"#;
        let out = parse_detections(line, DetectionFormat::Jsonl).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.issues.is_empty());
        let r = &out.records[0];
        assert_eq!(r.video_id, "v1");
        assert_eq!(r.frame_index, 12);
        assert_eq!(r.class_id, 0);
        assert_eq!(r.confidence, 0.9);
        assert_eq!(r.track_id, Some(3));
        assert_eq!(r.polygon.len(), 4);
    }

    #[test]
    fn confidence_out_of_range_is_malformed() {
        let line = br#"{"video_id":"v1","frame":0,"class_id":0,"conf":1.2,"polygon":[[0,0],[2,0],[0,2]],"track_id":null}"#;
        let out = parse_detections(line, DetectionFormat::Jsonl).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.issues.len(), 1);
        match &out.issues[0] {
            ParseIssue::Malformed { line, field, .. } => {
                assert_eq!(*line, 1);
                assert_eq!(*field, "conf");
            }
            other => panic!("expected malformed conf, got {other:?}"),
        }
    }

    #[test]
    fn bad_line_is_reported_and_rest_parses() {
        // Field-by-field expectations for the two good lines were worked out
        // by hand before wiring the parser (values chosen to be exact in
        // binary where it matters: conf 0.75, integer vertices).
        let stream = br#"{"video_id":"v1","frame":0,"class_id":0,"conf":0.75,"polygon":[[0,0],[2,0],[0,2]],"track_id":null}
{"video_id":"v1","frame":1,"class_id":0,"conf":0.75,"polygon":[[0,0],[2,0]],"track_id":null}
{"video_id":"v1","frame":2,"class_id":5,"conf":0.75,"polygon":[[4,0],[6,0],[4,2]],"track_id":7}"#;
        let out = parse_detections(stream, DetectionFormat::Jsonl).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.issues.len(), 1);
        assert_eq!(out.issues[0].line(), 2);
        assert_eq!(out.records[0].frame_index, 0);
        assert_eq!(out.records[1].frame_index, 2);
        assert_eq!(out.records[1].class_id, 5);
        assert_eq!(out.records[1].track_id, Some(7));
    }

    #[test]
    fn unknown_class_id_is_its_own_issue() {
        let line = br#"{"video_id":"v1","frame":0,"class_id":16,"conf":0.9,"polygon":[[0,0],[2,0],[0,2]]}"#;
        let out = parse_detections(line, DetectionFormat::Jsonl).unwrap();
        assert_eq!(out.issues, vec![ParseIssue::UnknownClassId { line: 1, class_id: 16 }]);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            parse_detections(b"", DetectionFormat::Jsonl),
            Err(DetectionError::EmptyStream)
        ));
        assert!(matches!(
            parse_detections(b"  \n\n", DetectionFormat::Jsonl),
            Err(DetectionError::EmptyStream)
        ));
    }

    #[test]
    fn records_come_back_sorted_by_video_then_frame() {
        let stream = br#"{"video_id":"b","frame":1,"class_id":0,"conf":0.9,"polygon":[[0,0],[2,0],[0,2]]}
{"video_id":"a","frame":5,"class_id":0,"conf":0.9,"polygon":[[0,0],[2,0],[0,2]]}
{"video_id":"a","frame":2,"class_id":0,"conf":0.9,"polygon":[[0,0],[2,0],[0,2]]}"#;
        let out = parse_detections(stream, DetectionFormat::Jsonl).unwrap();
        let order: Vec<(String, u64)> = out
            .records
            .iter()
            .map(|r| (r.video_id.clone(), r.frame_index))
            .collect();
        assert_eq!(order, vec![("a".into(), 2), ("a".into(), 5), ("b".into(), 1)]);
    }

    #[test]
    fn parse_csv_with_polygon_pairs() {
        let stream = b"video_id,frame,class_id,conf,track_id,polygon\nv1,3,5,0.8,,100.5:200.25;110:200;105:190\nv1,4,0,0.9,12,0:0;2:0;2:2;0:2\n";
        let out = parse_detections(stream, DetectionFormat::Csv).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.issues.is_empty());
        assert_eq!(out.records[0].polygon[0], Point::new(100.5, 200.25));
        assert_eq!(out.records[0].track_id, None);
        assert_eq!(out.records[1].track_id, Some(12));
    }

    #[test]
    fn csv_header_is_enforced() {
        let stream = b"video,frame,class,conf,track,poly\nv1,0,0,0.9,,0:0;2:0;0:2\n";
        assert!(matches!(
            parse_detections(stream, DetectionFormat::Csv),
            Err(DetectionError::BadHeader { .. })
        ));
    }

    #[test]
    fn roundtrip_both_formats() {
        let records = vec![
            record("v1", 0, 0, 0.875, &[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]),
            DetectionRecord { track_id: Some(9), ..record("v1", 1, 5, 0.625, &[(1.5, 0.25), (3.0, 0.0), (1.0, 2.0)]) },
            record("v2", 7, 3, 1.0, &[(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)]),
        ];
        for format in [DetectionFormat::Jsonl, DetectionFormat::Csv] {
            let bytes = serialize_detections(&records, format);
            let out = parse_detections(&bytes, format).unwrap();
            assert!(out.issues.is_empty());
            assert_eq!(out.records, records);
        }
    }

    #[test]
    fn filter_is_strictly_greater() {
        let records: Vec<DetectionRecord> = [0.4, 0.5, 0.51]
            .iter()
            .map(|&c| record("v", 0, 0, c, &[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]))
            .collect();
        let kept = filter_confidence(&records, DEFAULT_MIN_CONFIDENCE);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.51);
        assert!(filter_confidence(&[], DEFAULT_MIN_CONFIDENCE).is_empty());
    }

    #[test]
    fn filter_count_matches_independent_scan() {
        // 100 records with confidence (i mod 100) / 100; a separate loop
        // counts how many land strictly above 0.5.
        let records: Vec<DetectionRecord> = (0..100)
            .map(|i| record("v", i, 0, i as f64 / 100.0, &[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]))
            .collect();
        let mut expected = 0;
        for i in 0..100u64 {
            if i as f64 / 100.0 > 0.5 {
                expected += 1;
            }
        }
        assert_eq!(expected, 49);
        assert_eq!(filter_confidence(&records, 0.5).len(), expected);
    }

    #[test]
    fn centroid_of_square_and_triangle() {
        let square = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(2.0, 2.0), Point::new(0.0, 2.0)];
        assert_eq!(polygon_centroid(&square).unwrap(), Point::new(1.0, 1.0));
        let triangle = [Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(0.0, 3.0)];
        assert_eq!(polygon_centroid(&triangle).unwrap(), Point::new(1.0, 1.0));
    }

    #[test]
    fn centroid_of_l_shape_matches_rectangle_decomposition() {
        // Oracle: the L splits into [0,2]x[0,1] (area 2, centroid (1, 0.5))
        // and [0,1]x[1,2] (area 1, centroid (0.5, 1.5)); the area-weighted
        // mean is (2*1 + 1*0.5)/3 = (2*0.5 + 1*1.5)/3 = 5/6 on both axes.
        let (a1, c1) = (2.0, Point::new(1.0, 0.5));
        let (a2, c2) = (1.0, Point::new(0.5, 1.5));
        let oracle = Point::new(
            (a1 * c1.x + a2 * c2.x) / (a1 + a2),
            (a1 * c1.y + a2 * c2.y) / (a1 + a2),
        );
        assert_eq!(oracle, Point::new(5.0 / 6.0, 5.0 / 6.0));

        let l_shape = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        let got = polygon_centroid(&l_shape).unwrap();
        assert!((got.x - oracle.x).abs() < 1e-12);
        assert!((got.y - oracle.y).abs() < 1e-12);
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        assert!(matches!(
            polygon_centroid(&[Point::new(0.0, 0.0), Point::new(1.0, 1.0)]),
            Err(DetectionError::DegeneratePolygon)
        ));
        let collinear = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)];
        assert!(matches!(polygon_centroid(&collinear), Err(DetectionError::DegeneratePolygon)));
    }

    #[test]
    fn side_boundary_belongs_to_the_right() {
        let records = vec![
            record("v", 0, 0, 0.9, &square_at(900.0, 100.0)),
            record("v", 1, 0, 0.9, &square_at(960.0, 100.0)),
        ];
        let tracks = assign_roles(&records, 1920.0, &[Part::Jaw]);
        let left = tracks.iter().find(|t| t.role == Role::LeftJaw).unwrap();
        let right = tracks.iter().find(|t| t.role == Role::RightJaw).unwrap();
        assert_eq!(left.samples.get(&0), Some(&Point::new(900.0, 100.0)));
        assert!(!left.samples.contains_key(&1));
        assert_eq!(right.samples.get(&1), Some(&Point::new(960.0, 100.0)));
    }

    #[test]
    fn missing_frames_are_gaps() {
        let records = vec![
            record("v", 6, 0, 0.9, &square_at(100.0, 100.0)),
            record("v", 8, 0, 0.9, &square_at(100.0, 100.0)),
        ];
        let tracks = assign_roles(&records, 1920.0, &[Part::Jaw]);
        for t in &tracks {
            assert!(!t.samples.contains_key(&7));
        }
    }

    #[test]
    fn crossing_tools_swap_roles_mid_stream() {
        // Tool A walks 300 -> 1700, tool B walks 1700 -> 300 over 10 frames;
        // the oracle below applies the side rule per frame by hand.
        let width = 2000.0;
        let mut records = Vec::new();
        for f in 0..10u64 {
            let ax = 300.0 + f as f64 * 155.0; // 300, 455, ..., 1695 (stays alone after crossing)
            let bx = 1700.0 - f as f64 * 155.0;
            records.push(record("v", f, 0, 0.9, &square_at(ax, 100.0)));
            records.push(record("v", f, 5, 0.8, &square_at(bx, 200.0)));
        }
        let tracks = assign_roles(&records, width, &[Part::Jaw]);
        let left = tracks.iter().find(|t| t.role == Role::LeftJaw).unwrap();
        let right = tracks.iter().find(|t| t.role == Role::RightJaw).unwrap();

        for f in 0..10u64 {
            let ax = 300.0 + f as f64 * 155.0;
            let bx = 1700.0 - f as f64 * 155.0;
            let mut lefts: Vec<(f64, f64)> = Vec::new();
            let mut rights: Vec<(f64, f64)> = Vec::new();
            for &(x, conf) in &[(ax, 0.9), (bx, 0.8)] {
                if x < width / 2.0 {
                    lefts.push((x, conf));
                } else {
                    rights.push((x, conf));
                }
            }
            let pick = |side: &[(f64, f64)]| {
                side.iter()
                    .cloned()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .map(|(x, _)| x)
            };
            assert_eq!(left.samples.get(&f).map(|p| p.x), pick(&lefts), "frame {f} left");
            assert_eq!(right.samples.get(&f).map(|p| p.x), pick(&rights), "frame {f} right");
        }
    }

    #[test]
    fn same_side_duplicates_resolved_by_confidence_then_input_order() {
        let records = vec![
            record("v", 0, 0, 0.7, &square_at(100.0, 100.0)),
            record("v", 0, 5, 0.9, &square_at(200.0, 100.0)),
            record("v", 1, 0, 0.8, &square_at(300.0, 100.0)),
            record("v", 1, 5, 0.8, &square_at(400.0, 100.0)),
        ];
        let tracks = assign_roles(&records, 1920.0, &[Part::Jaw]);
        let left = tracks.iter().find(|t| t.role == Role::LeftJaw).unwrap();
        assert_eq!(left.samples.get(&0), Some(&Point::new(200.0, 100.0)));
        // Equal confidence keeps the earlier record.
        assert_eq!(left.samples.get(&1), Some(&Point::new(300.0, 100.0)));
    }

    #[test]
    fn at_most_one_sample_per_role_frame() {
        let mut records = Vec::new();
        for f in 0..5u64 {
            for k in 0..3 {
                records.push(record("v", f, 0, 0.5 + 0.1 * k as f64, &square_at(100.0 + k as f64, 50.0)));
            }
        }
        let tracks = assign_roles(&records, 1920.0, &[Part::Jaw]);
        for t in tracks {
            for f in t.samples.keys() {
                assert!(*f < 5);
            }
            // BTreeMap guarantees one entry per frame; the rule picked the
            // highest-confidence candidate (k = 2).
            if t.role == Role::LeftJaw {
                assert_eq!(t.samples[&0].x, 102.0);
            }
        }
    }

    proptest! {
        #[test]
        fn centroid_translation_equivariant(
            xs in proptest::collection::vec(-500i32..500, 3..10),
            ys in proptest::collection::vec(-500i32..500, 3..10),
            tx in -1000i32..1000,
            ty in -1000i32..1000,
        ) {
            let n = xs.len().min(ys.len());
            // Build a polygon around a circle so it is simple and non-degenerate.
            let polygon: Vec<Point> = (0..n)
                .map(|i| {
                    let angle = i as f64 / n as f64 * std::f64::consts::TAU;
                    Point::new(
                        100.0 * angle.cos() + xs[i] as f64 / 100.0,
                        100.0 * angle.sin() + ys[i] as f64 / 100.0,
                    )
                })
                .collect();
            prop_assume!(polygon_centroid(&polygon).is_ok());
            let moved: Vec<Point> = polygon
                .iter()
                .map(|p| Point::new(p.x + tx as f64, p.y + ty as f64))
                .collect();
            let c = polygon_centroid(&polygon).unwrap();
            let cm = polygon_centroid(&moved).unwrap();
            prop_assert!((cm.x - (c.x + tx as f64)).abs() < 1e-6);
            prop_assert!((cm.y - (c.y + ty as f64)).abs() < 1e-6);
        }

        #[test]
        fn centroid_invariant_under_rotation_and_reversal(shift in 0usize..6) {
            let polygon = vec![
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 2.0),
                Point::new(0.0, 2.0),
            ];
            let c = polygon_centroid(&polygon).unwrap();

            let mut rotated = polygon.clone();
            rotated.rotate_left(shift);
            let cr = polygon_centroid(&rotated).unwrap();
            prop_assert!((cr.x - c.x).abs() < 1e-9 && (cr.y - c.y).abs() < 1e-9);

            let mut reversed = rotated;
            reversed.reverse();
            let cv = polygon_centroid(&reversed).unwrap();
            prop_assert!((cv.x - c.x).abs() < 1e-9 && (cv.y - c.y).abs() < 1e-9);
        }

        #[test]
        fn filter_output_is_a_subsequence(confs in proptest::collection::vec(0.0f64..1.0, 0..50)) {
            let records: Vec<DetectionRecord> = confs
                .iter()
                .enumerate()
                .map(|(i, &c)| record("v", i as u64, 0, c, &[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]))
                .collect();
            let kept = filter_confidence(&records, 0.5);
            let mut cursor = records.iter();
            for k in &kept {
                prop_assert!(cursor.any(|r| r == k));
            }
        }
    }
}
