//! Scoring of predicted phase sequences against ground-truth annotations,
//! windowed mode smoothing, and deterministic rendering: timeline SVG and
//! confusion-matrix CSV.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{validate_annotations, PhaseAnnotation, PipelineError, PHASE_COUNT};

pub const DEFAULT_SMOOTH_WINDOW: u64 = 31;
/// Fixed label palette, indexed by phase id (0 is idle).
pub const TIMELINE_PALETTE: [&str; PHASE_COUNT] =
    ["gray", "blue", "yellow", "green", "orange", "indigo", "violet"];

const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEntry {
    pub frame_index: u64,
    pub label: u8,
    /// Per-class probabilities summing to 1 within 1e-6, when the
    /// predictor exposes them.
    pub probs: Option<[f64; PHASE_COUNT]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSequence {
    pub video_id: String,
    pub entries: Vec<PredictionEntry>,
}

impl PredictionSequence {
    pub fn validate(&self) -> Result<(), EvalError> {
        for pair in self.entries.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(EvalError::InvalidPrediction(format!(
                    "frames not strictly increasing at {}",
                    pair[1].frame_index
                )));
            }
        }
        for e in &self.entries {
            if e.label as usize >= PHASE_COUNT {
                return Err(EvalError::InvalidPrediction(format!(
                    "frame {}: label {} out of 0..6",
                    e.frame_index, e.label
                )));
            }
            if let Some(probs) = &e.probs {
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(EvalError::InvalidPrediction(format!(
                        "frame {}: probabilities must be finite and nonnegative",
                        e.frame_index
                    )));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                    return Err(EvalError::InvalidPrediction(format!(
                        "frame {}: probabilities sum to {sum}, not 1",
                        e.frame_index
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scores plus the confusion matrix they were computed from; the change
/// fields are filled only when a baseline is supplied. Field order is the
/// JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub per_class_f1: [f64; PHASE_COUNT],
    pub confusion: [[u64; PHASE_COUNT]; PHASE_COUNT],
    pub accuracy_change_pct: Option<f64>,
    pub f1_change_pct: Option<f64>,
}

impl MetricReport {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, EvalError> {
        serde_json::from_slice(bytes).map_err(|e| EvalError::InvalidFormat(e.to_string()))
    }

    /// Attach relative-change percentages against a baseline report's
    /// scores.
    pub fn with_baseline(mut self, old_accuracy: f64, old_f1: f64) -> Result<Self, EvalError> {
        self.accuracy_change_pct = Some(relative_change(old_accuracy, self.accuracy)?);
        self.f1_change_pct = Some(relative_change(old_f1, self.f1_macro)?);
        Ok(self)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("video {video_id}: predicted frame {frame} is outside every annotation segment")]
    UncoveredFrame { video_id: String, frame: u64 },
    #[error("relative change needs a strictly positive baseline")]
    ZeroBaseline,
    #[error("smoothing window must be odd and at least 1, got {0}")]
    InvalidWindow(u64),
    #[error("invalid prediction sequence: {0}")]
    InvalidPrediction(String),
    #[error("no predictions to score")]
    EmptyPredictions,
    #[error("bad file format: {0}")]
    InvalidFormat(String),
    #[error(transparent)]
    Annotation(#[from] PipelineError),
}

/// Truth labels for exactly the predicted frames; every predicted frame
/// must fall inside a segment of its video.
pub fn confusion_matrix(
    pred: &PredictionSequence,
    truth: &[PhaseAnnotation],
) -> Result<[[u64; PHASE_COUNT]; PHASE_COUNT], EvalError> {
    pred.validate()?;
    validate_annotations(truth)?;
    let mut segs: Vec<&PhaseAnnotation> =
        truth.iter().filter(|a| a.video_id == pred.video_id).collect();
    segs.sort_by_key(|a| a.start_frame);
    let mut confusion = [[0u64; PHASE_COUNT]; PHASE_COUNT];
    let mut seg_pos = 0usize;
    for entry in &pred.entries {
        while seg_pos < segs.len() && segs[seg_pos].end_frame < entry.frame_index {
            seg_pos += 1;
        }
        if seg_pos >= segs.len() || !segs[seg_pos].covers(entry.frame_index) {
            return Err(EvalError::UncoveredFrame {
                video_id: pred.video_id.clone(),
                frame: entry.frame_index,
            });
        }
        confusion[segs[seg_pos].phase_label as usize][entry.label as usize] += 1;
    }
    Ok(confusion)
}

fn trace_over_total(confusion: &[[u64; PHASE_COUNT]; PHASE_COUNT]) -> Option<f64> {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return None;
    }
    let trace: u64 = (0..PHASE_COUNT).map(|i| confusion[i][i]).sum();
    Some(trace as f64 / total as f64)
}

/// Fraction of predicted frames whose label matches the annotation.
pub fn accuracy(pred: &PredictionSequence, truth: &[PhaseAnnotation]) -> Result<f64, EvalError> {
    trace_over_total(&confusion_matrix(pred, truth)?).ok_or(EvalError::EmptyPredictions)
}

fn f1_from_confusion(
    confusion: &[[u64; PHASE_COUNT]; PHASE_COUNT],
) -> (f64, [f64; PHASE_COUNT]) {
    let mut per_class = [0.0; PHASE_COUNT];
    let mut macro_sum = 0.0;
    let mut macro_classes = 0u32;
    for c in 0..PHASE_COUNT {
        let tp = confusion[c][c];
        let truth_count: u64 = confusion[c].iter().sum();
        let pred_count: u64 = (0..PHASE_COUNT).map(|t| confusion[t][c]).sum();
        let precision = if pred_count == 0 { 0.0 } else { tp as f64 / pred_count as f64 };
        let recall = if truth_count == 0 { 0.0 } else { tp as f64 / truth_count as f64 };
        per_class[c] = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        // Macro mean runs over classes present in the ground truth only.
        if truth_count > 0 {
            macro_sum += per_class[c];
            macro_classes += 1;
        }
    }
    let f1_macro = if macro_classes == 0 { 0.0 } else { macro_sum / f64::from(macro_classes) };
    (f1_macro, per_class)
}

/// Per-class F1 (0/0 counted as 0) and the unweighted mean over classes
/// present in the truth.
pub fn f1_macro(
    pred: &PredictionSequence,
    truth: &[PhaseAnnotation],
) -> Result<(f64, [f64; PHASE_COUNT]), EvalError> {
    Ok(f1_from_confusion(&confusion_matrix(pred, truth)?))
}

/// Full score card; change fields stay empty until `with_baseline`.
pub fn metric_report(
    pred: &PredictionSequence,
    truth: &[PhaseAnnotation],
) -> Result<MetricReport, EvalError> {
    let confusion = confusion_matrix(pred, truth)?;
    let accuracy = trace_over_total(&confusion).ok_or(EvalError::EmptyPredictions)?;
    let (f1_macro, per_class_f1) = f1_from_confusion(&confusion);
    Ok(MetricReport {
        accuracy,
        f1_macro,
        per_class_f1,
        confusion,
        accuracy_change_pct: None,
        f1_change_pct: None,
    })
}

/// Signed percent change relative to the old value.
pub fn relative_change(old: f64, new: f64) -> Result<f64, EvalError> {
    if old <= 0.0 || !old.is_finite() || !new.is_finite() {
        return Err(EvalError::ZeroBaseline);
    }
    Ok((new - old) / old * 100.0)
}

/// Reporting convention for percent values: two decimals, truncated toward
/// zero (0.8801 → 0.8982 prints as 2.05, not 2.06).
pub fn truncate_pct(pct: f64) -> f64 {
    (pct * 100.0).trunc() / 100.0
}

/// Replace each label by the modal label among entries within
/// (window − 1)/2 frame indices; ties keep the original label when it is
/// tied for the lead, otherwise take the smallest tied id. Probability
/// vectors do not survive smoothing.
pub fn temporal_smooth(
    pred: &PredictionSequence,
    window: u64,
) -> Result<PredictionSequence, EvalError> {
    if window < 1 || window.is_multiple_of(2) {
        return Err(EvalError::InvalidWindow(window));
    }
    pred.validate()?;
    let half = (window - 1) / 2;
    let entries = &pred.entries;
    let mut counts = [0u64; PHASE_COUNT];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut smoothed = Vec::with_capacity(entries.len());
    for entry in entries {
        let center = entry.frame_index;
        while hi < entries.len() && entries[hi].frame_index <= center + half {
            counts[entries[hi].label as usize] += 1;
            hi += 1;
        }
        while entries[lo].frame_index + half < center {
            counts[entries[lo].label as usize] -= 1;
            lo += 1;
        }
        let best = *counts.iter().max().expect("window holds the center");
        let label = if counts[entry.label as usize] == best {
            entry.label
        } else {
            counts.iter().position(|&c| c == best).expect("some label has the max") as u8
        };
        smoothed.push(PredictionEntry { frame_index: center, label, probs: None });
    }
    Ok(PredictionSequence { video_id: pred.video_id.clone(), entries: smoothed })
}

/// Argmax of the frame-wise mean of probability vectors; every input must
/// carry probabilities over the same frames. Ties pick the smallest id.
pub fn ensemble_mean(sequences: &[PredictionSequence]) -> Result<PredictionSequence, EvalError> {
    let first = sequences.first().ok_or(EvalError::EmptyPredictions)?;
    for seq in sequences {
        seq.validate()?;
        if seq.video_id != first.video_id {
            return Err(EvalError::InvalidPrediction(format!(
                "cannot ensemble across videos {:?} and {:?}",
                first.video_id, seq.video_id
            )));
        }
        if seq.entries.len() != first.entries.len()
            || seq
                .entries
                .iter()
                .zip(&first.entries)
                .any(|(a, b)| a.frame_index != b.frame_index)
        {
            return Err(EvalError::InvalidPrediction(
                "ensemble inputs must cover identical frames".into(),
            ));
        }
    }
    let mut entries = Vec::with_capacity(first.entries.len());
    for i in 0..first.entries.len() {
        let mut mean = [0.0f64; PHASE_COUNT];
        for seq in sequences {
            let probs = seq.entries[i].probs.as_ref().ok_or_else(|| {
                EvalError::InvalidPrediction(format!(
                    "frame {}: ensemble input lacks probabilities",
                    seq.entries[i].frame_index
                ))
            })?;
            for (m, p) in mean.iter_mut().zip(probs) {
                *m += p;
            }
        }
        for m in &mut mean {
            *m /= sequences.len() as f64;
        }
        let mut label = 0u8;
        for (c, &p) in mean.iter().enumerate() {
            if p > mean[label as usize] {
                label = c as u8;
            }
        }
        entries.push(PredictionEntry {
            frame_index: first.entries[i].frame_index,
            label,
            probs: Some(mean),
        });
    }
    Ok(PredictionSequence { video_id: first.video_id.clone(), entries })
}

/// Label covering the most annotated frames across the given segments;
/// ties pick the smallest label. None when there are no segments.
pub fn majority_label(annotations: &[PhaseAnnotation]) -> Option<u8> {
    let mut totals = [0u64; PHASE_COUNT];
    for a in annotations {
        if (a.phase_label as usize) < PHASE_COUNT && a.start_frame <= a.end_frame {
            totals[a.phase_label as usize] += a.end_frame - a.start_frame + 1;
        }
    }
    let best = *totals.iter().max()?;
    if best == 0 {
        return None;
    }
    Some(totals.iter().position(|&t| t == best)? as u8)
}

/// Drop predicted frames covered by idle (label 0) segments, so scores can
/// be computed over task frames only.
pub fn exclude_idle_predictions(
    pred: &PredictionSequence,
    truth: &[PhaseAnnotation],
) -> PredictionSequence {
    let idle: Vec<&PhaseAnnotation> = truth
        .iter()
        .filter(|a| a.video_id == pred.video_id && a.phase_label == 0)
        .collect();
    PredictionSequence {
        video_id: pred.video_id.clone(),
        entries: pred
            .entries
            .iter()
            .filter(|e| !idle.iter().any(|seg| seg.covers(e.frame_index)))
            .cloned()
            .collect(),
    }
}

/// One horizontal lane of the timeline chart: labeled bands of
/// (start, end inclusive, phase).
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub label: String,
    pub bands: Vec<(u64, u64, u8)>,
}

impl TimelineRow {
    /// Run-length encode a prediction sequence; a frame gap greater than 1
    /// or a label change starts a new band.
    pub fn from_predictions(label: &str, pred: &PredictionSequence) -> Self {
        let mut bands: Vec<(u64, u64, u8)> = Vec::new();
        for e in &pred.entries {
            match bands.last_mut() {
                Some(band) if band.2 == e.label && e.frame_index == band.1 + 1 => {
                    band.1 = e.frame_index;
                }
                _ => bands.push((e.frame_index, e.frame_index, e.label)),
            }
        }
        TimelineRow { label: label.to_owned(), bands }
    }

    pub fn from_annotations(label: &str, video_id: &str, truth: &[PhaseAnnotation]) -> Self {
        let mut bands: Vec<(u64, u64, u8)> = truth
            .iter()
            .filter(|a| a.video_id == video_id)
            .map(|a| (a.start_frame, a.end_frame, a.phase_label))
            .collect();
        bands.sort_by_key(|b| b.0);
        TimelineRow { label: label.to_owned(), bands }
    }
}

const TIMELINE_CHART_X: f64 = 130.0;
const TIMELINE_CHART_W: f64 = 800.0;
const TIMELINE_ROW_H: f64 = 40.0;
const TIMELINE_BAND_H: f64 = 28.0;

/// Horizontal color-band chart, one lane per row, with a fixed 7-swatch
/// legend. Output bytes depend only on the input.
pub fn render_timeline(rows: &[TimelineRow]) -> Vec<u8> {
    let lo = rows.iter().flat_map(|r| r.bands.iter().map(|b| b.0)).min().unwrap_or(0);
    let hi = rows.iter().flat_map(|r| r.bands.iter().map(|b| b.1)).max().unwrap_or(0);
    let span = (hi + 1).saturating_sub(lo).max(1) as f64;
    let x = |frame: u64| TIMELINE_CHART_X + (frame - lo) as f64 * TIMELINE_CHART_W / span;

    let legend_y = 20.0 + rows.len() as f64 * TIMELINE_ROW_H + 10.0;
    let height = legend_y + 30.0;
    let width = TIMELINE_CHART_X + TIMELINE_CHART_W + 20.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width:.0} {height:.0}\" \
         width=\"{width:.0}\" height=\"{height:.0}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n"
    ));
    for (i, row) in rows.iter().enumerate() {
        let y = 20.0 + i as f64 * TIMELINE_ROW_H;
        svg.push_str(&format!(
            "<text x=\"10\" y=\"{:.3}\" fill=\"black\">{}</text>\n",
            y + TIMELINE_BAND_H / 2.0 + 4.0,
            xml_escape(&row.label)
        ));
        for &(start, end, phase) in &row.bands {
            let color = TIMELINE_PALETTE[(phase as usize).min(PHASE_COUNT - 1)];
            svg.push_str(&format!(
                "<rect x=\"{:.3}\" y=\"{y:.3}\" width=\"{:.3}\" height=\"{TIMELINE_BAND_H:.3}\" \
                 fill=\"{color}\"><title>phase {phase} [{start}, {end}]</title></rect>\n",
                x(start),
                x(end + 1) - x(start),
            ));
        }
    }
    for (phase, color) in TIMELINE_PALETTE.iter().enumerate() {
        let sx = TIMELINE_CHART_X + phase as f64 * 100.0;
        svg.push_str(&format!(
            "<rect x=\"{sx:.3}\" y=\"{legend_y:.3}\" width=\"14\" height=\"14\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.3}\" y=\"{:.3}\" fill=\"black\">{phase} {color}</text>\n",
            sx + 18.0,
            legend_y + 12.0
        ));
    }
    svg.push_str("</svg>\n");
    svg.into_bytes()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// 7×7 counts with header labels 0..6; rows are truth, columns are
/// predictions.
pub fn confusion_csv(report: &MetricReport) -> Vec<u8> {
    let mut out = String::from(",0,1,2,3,4,5,6\n");
    for (truth, row) in report.confusion.iter().enumerate() {
        out.push_str(&truth.to_string());
        for count in row {
            out.push(',');
            out.push_str(&count.to_string());
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub const PREDICTION_CSV_HEADER: &str = "video_id,frame,label,p0,p1,p2,p3,p4,p5,p6";

pub fn write_predictions_csv(sequences: &[PredictionSequence]) -> Vec<u8> {
    let mut out = format!("{PREDICTION_CSV_HEADER}\n").into_bytes();
    for seq in sequences {
        for e in &seq.entries {
            let mut line = format!("{},{},{}", seq.video_id, e.frame_index, e.label);
            match &e.probs {
                Some(probs) => {
                    for p in probs {
                        line.push_str(&format!(",{p}"));
                    }
                }
                None => line.push_str(&",".repeat(PHASE_COUNT)),
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}

/// Reads sequences grouped by video in row order; probability cells must
/// be all present or all empty per row.
pub fn read_predictions_csv(bytes: &[u8]) -> Result<Vec<PredictionSequence>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| EvalError::InvalidFormat(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != PREDICTION_CSV_HEADER {
        return Err(EvalError::InvalidFormat(format!(
            "prediction CSV header must be {PREDICTION_CSV_HEADER:?}, got {header:?}"
        )));
    }
    let mut sequences: Vec<PredictionSequence> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| EvalError::InvalidFormat(e.to_string()))?;
        if record.len() != 3 + PHASE_COUNT {
            return Err(EvalError::InvalidFormat(format!(
                "expected {} fields, got {}",
                3 + PHASE_COUNT,
                record.len()
            )));
        }
        let video_id = record[0].to_owned();
        let frame_index: u64 = record[1]
            .parse()
            .map_err(|e| EvalError::InvalidFormat(format!("frame: {e}")))?;
        let label: u8 = record[2]
            .parse()
            .map_err(|e| EvalError::InvalidFormat(format!("label: {e}")))?;
        let prob_cells: Vec<&str> = (3..3 + PHASE_COUNT).map(|i| record.get(i).unwrap_or("")).collect();
        let probs = if prob_cells.iter().all(|c| c.is_empty()) {
            None
        } else if prob_cells.iter().any(|c| c.is_empty()) {
            return Err(EvalError::InvalidFormat(format!(
                "frame {frame_index}: probability cells must be all present or all empty"
            )));
        } else {
            let mut probs = [0.0; PHASE_COUNT];
            for (slot, cell) in probs.iter_mut().zip(&prob_cells) {
                *slot = cell
                    .parse()
                    .map_err(|e| EvalError::InvalidFormat(format!("probability: {e}")))?;
            }
            Some(probs)
        };
        let entry = PredictionEntry { frame_index, label, probs };
        match sequences.last_mut() {
            Some(seq) if seq.video_id == video_id => seq.entries.push(entry),
            _ => sequences.push(PredictionSequence { video_id, entries: vec![entry] }),
        }
    }
    for seq in &sequences {
        seq.validate()?;
    }
    Ok(sequences)
}
