//! `resample`: load or derive per-video manifests, optionally restrict
//! them to key frames and drop idle rows, then rebalance every annotated
//! step to a fixed expanded frame count. reduction.json compares each
//! video's final manifest against its pre-selection input.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use kafr::pipeline::{
    apply_selection, exclude_idle, manifest_from_annotations, read_manifest_csv, read_phase_csv,
    reduction_report, resample_phases, write_manifest_csv, FrameManifest, ReductionReport,
    DEFAULT_FRAMES_PER_STEP,
};
use kafr::selection::KeyFrameSet;

use crate::artifacts::Artifact;
use crate::commands::{read_input, require, Ctx};
use crate::errors::CliError;

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let cfg = &ctx.cfg;
    let annotations = read_phase_csv(&read_input(require(&cfg.annotations, "--annotations")?)?)?;
    let frames_per_step = cfg.frames_per_step.unwrap_or(DEFAULT_FRAMES_PER_STEP);
    let befores: Vec<FrameManifest> = match &cfg.manifest {
        Some(path) => read_manifest_csv(&read_input(path)?)?,
        None => {
            let mut ids: Vec<&str> = annotations.iter().map(|a| a.video_id.as_str()).collect();
            ids.sort();
            ids.dedup();
            ids.into_iter()
                .map(|video_id| manifest_from_annotations(video_id, &annotations))
                .collect::<Result<_, _>>()?
        }
    };
    if befores.is_empty() {
        return Err(CliError::Data("no videos to resample".into()));
    }
    let keysets = load_keyframe_sets(cfg.keyframes.as_deref())?;
    let drop_idle = cfg.exclude_idle == Some(true);

    let results: Vec<(FrameManifest, ReductionReport)> = ctx.pool()?.install(|| {
        befores
            .par_iter()
            .map(|before| {
                let mut manifest = before.clone();
                if !keysets.is_empty() {
                    let set = keysets.get(&manifest.video_id).ok_or_else(|| {
                        CliError::Data(format!(
                            "no key-frame set for video {:?}",
                            manifest.video_id
                        ))
                    })?;
                    manifest = apply_selection(&manifest, set)?;
                }
                if drop_idle {
                    manifest = exclude_idle(&manifest, &annotations);
                }
                let resampled = resample_phases(&manifest, &annotations, frames_per_step)?;
                let report = reduction_report(before, &resampled)?;
                Ok((resampled, report))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let (manifests, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut report_bytes = serde_json::to_vec_pretty(&reports).expect("reports serialize");
    report_bytes.push(b'\n');
    Ok(vec![
        Artifact::new("manifest.resampled.csv", write_manifest_csv(&manifests)),
        Artifact::new("reduction.json", report_bytes),
    ])
}

/// Key-frame sets from a single JSON file or a directory of them, keyed by
/// video. No path at all means selection is skipped.
fn load_keyframe_sets(path: Option<&Path>) -> Result<BTreeMap<String, KeyFrameSet>, CliError> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let mut files: Vec<PathBuf> = Vec::new();
    if path.is_dir() {
        let listing = std::fs::read_dir(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        for entry in listing {
            let file = entry
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?
                .path();
            if file.extension().and_then(|e| e.to_str()) == Some("json") {
                files.push(file);
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(CliError::Config(format!(
                "no .json key-frame sets under {}",
                path.display()
            )));
        }
    } else {
        files.push(path.to_path_buf());
    }
    let mut sets = BTreeMap::new();
    for file in files {
        let set = KeyFrameSet::from_json_bytes(&read_input(&file)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
        sets.insert(set.video_id.clone(), set);
    }
    Ok(sets)
}
