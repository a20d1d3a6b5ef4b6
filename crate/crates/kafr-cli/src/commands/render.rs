//! `render`: one SVG phase timeline per predicted video, with optional
//! annotation and smoothed lanes for side-by-side comparison.

use std::path::PathBuf;

use rayon::prelude::*;

use kafr::eval::{read_predictions_csv, render_timeline, temporal_smooth, TimelineRow};
use kafr::pipeline::read_phase_csv;

use crate::artifacts::Artifact;
use crate::commands::{read_input, require, sanitize_id, Ctx};
use crate::errors::CliError;

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let cfg = &ctx.cfg;
    let predictions =
        read_predictions_csv(&read_input(require(&cfg.predictions, "--predictions")?)?)?;
    if predictions.is_empty() {
        return Err(CliError::Data("prediction file holds no sequences".into()));
    }
    let annotations = match &cfg.annotations {
        Some(path) => Some(read_phase_csv(&read_input(path)?)?),
        None => None,
    };
    ctx.pool()?.install(|| {
        predictions
            .par_iter()
            .map(|sequence| {
                let mut rows = Vec::new();
                if let Some(annotations) = &annotations {
                    rows.push(TimelineRow::from_annotations(
                        "annotated",
                        &sequence.video_id,
                        annotations,
                    ));
                }
                rows.push(TimelineRow::from_predictions("predicted", sequence));
                if let Some(window) = cfg.smooth_window {
                    let smoothed = temporal_smooth(sequence, window)?;
                    rows.push(TimelineRow::from_predictions("smoothed", &smoothed));
                }
                let path = PathBuf::from("timeline")
                    .join(format!("{}.svg", sanitize_id(&sequence.video_id)));
                Ok(Artifact::new(path, render_timeline(&rows)))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })
}
