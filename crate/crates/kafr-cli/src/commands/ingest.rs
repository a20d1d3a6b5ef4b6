//! `ingest`: parse a detection stream, drop low-confidence boxes, resolve
//! per-role centroid tracks, and derive kinematics. Skipped input lines
//! land in issues.json instead of failing the run.

use kafr::detections::{serialize_detections, DetectionFormat};
use kafr::kinematics::{compute_kinematics, write_kinematics_csv, KinematicSeries, DEFAULT_MAX_GAP};

use crate::artifacts::Artifact;
use crate::commands::{load_detections, Ctx};
use crate::errors::CliError;

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let loaded = load_detections(&ctx.cfg)?;
    let max_gap = ctx.cfg.max_gap.unwrap_or(DEFAULT_MAX_GAP);
    let series: Vec<KinematicSeries> =
        loaded.tracks.iter().map(|t| compute_kinematics(t, max_gap)).collect();
    let issues: Vec<serde_json::Value> = loaded
        .outcome
        .issues
        .iter()
        .map(|i| serde_json::json!({ "line": i.line(), "message": i.to_string() }))
        .collect();
    let mut issue_bytes = serde_json::to_vec_pretty(&issues).expect("issues serialize");
    issue_bytes.push(b'\n');
    Ok(vec![
        Artifact::new(
            "detections.normalized.jsonl",
            serialize_detections(&loaded.kept, DetectionFormat::Jsonl),
        ),
        Artifact::new("issues.json", issue_bytes),
        Artifact::new("kinematics.csv", write_kinematics_csv(&series)),
    ])
}
