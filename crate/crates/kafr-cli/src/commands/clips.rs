//! `clips`: expand each manifest row by its duplication count and emit one
//! fixed-length, left-padded clip window per expanded frame.

use rayon::prelude::*;

use kafr::pipeline::{build_clips, read_manifest_csv, write_clips_jsonl, ClipWindow,
    DEFAULT_CLIP_LENGTH};

use crate::artifacts::Artifact;
use crate::commands::{read_input, require, Ctx};
use crate::errors::CliError;

pub fn run(ctx: &Ctx) -> Result<Vec<Artifact>, CliError> {
    let manifests = read_manifest_csv(&read_input(require(&ctx.cfg.manifest, "--manifest")?)?)?;
    if manifests.is_empty() {
        return Err(CliError::Data("manifest file holds no videos".into()));
    }
    let clip_length = ctx.cfg.clip_length.unwrap_or(DEFAULT_CLIP_LENGTH);
    let per_video: Vec<Vec<ClipWindow>> = ctx.pool()?.install(|| {
        manifests
            .par_iter()
            .map(|manifest| build_clips(manifest, clip_length).map_err(CliError::from))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let clips: Vec<ClipWindow> = per_video.into_iter().flatten().collect();
    Ok(vec![Artifact::new("clips.jsonl", write_clips_jsonl(&clips))])
}
