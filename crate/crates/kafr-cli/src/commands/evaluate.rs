//! `evaluate`: score each predicted sequence against the annotations.
//! Optional smoothing runs first and is itself written out, idle exclusion
//! drops idle-covered frames before scoring, and a baseline report turns
//! into relative-change percentages.

use std::path::PathBuf;

use rayon::prelude::*;

use kafr::eval::{
    confusion_csv, exclude_idle_predictions, metric_report, read_predictions_csv, temporal_smooth,
    write_predictions_csv, MetricReport, PredictionSequence,
};
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
    let annotations = read_phase_csv(&read_input(require(&cfg.annotations, "--annotations")?)?)?;
    let baseline = match &cfg.baseline {
        Some(path) => Some(MetricReport::from_json_bytes(&read_input(path)?)?),
        None => None,
    };

    let mut artifacts = Vec::new();
    let scored: Vec<PredictionSequence> = match cfg.smooth_window {
        Some(window) => {
            let smoothed = predictions
                .iter()
                .map(|p| temporal_smooth(p, window))
                .collect::<Result<Vec<_>, _>>()?;
            artifacts
                .push(Artifact::new("predictions.smoothed.csv", write_predictions_csv(&smoothed)));
            smoothed
        }
        None => predictions,
    };
    let drop_idle = cfg.exclude_idle == Some(true);

    let per_video: Vec<Vec<Artifact>> = ctx.pool()?.install(|| {
        scored
            .par_iter()
            .map(|sequence| {
                let sequence = if drop_idle {
                    exclude_idle_predictions(sequence, &annotations)
                } else {
                    sequence.clone()
                };
                let mut report = metric_report(&sequence, &annotations)?;
                if let Some(b) = &baseline {
                    report = report.with_baseline(b.accuracy, b.f1_macro)?;
                }
                let stem = sanitize_id(&sequence.video_id);
                Ok(vec![
                    Artifact::new(
                        PathBuf::from("metrics").join(format!("{stem}.json")),
                        report.to_json_bytes(),
                    ),
                    Artifact::new(
                        PathBuf::from("confusion").join(format!("{stem}.csv")),
                        confusion_csv(&report),
                    ),
                ])
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    artifacts.extend(per_video.into_iter().flatten());
    Ok(artifacts)
}
