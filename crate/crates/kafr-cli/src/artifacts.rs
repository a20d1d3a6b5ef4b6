//! Artifact writing. Every output lands via temp file + rename so a crash
//! never leaves a half-written file, and each run ends with a
//! run_manifest.json echoing the merged config plus a content hash per
//! artifact. Reruns over identical inputs are byte-identical; wall-clock
//! time enters only behind --timestamps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::Ctx;
use crate::config::FileConfig;
use crate::errors::CliError;

pub struct Artifact {
    /// Path relative to the output directory.
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(path: impl Into<PathBuf>, bytes: Vec<u8>) -> Self {
        Artifact { path: path.into(), bytes }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").expect("writing to a String cannot fail");
    }
    hex
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(fail)?;
        }
    }
    let name = path.file_name().ok_or_else(|| {
        CliError::Config(format!("artifact path {} has no file name", path.display()))
    })?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp.{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(fail)
}

#[derive(Serialize)]
struct OutputRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a FileConfig,
    outputs: Vec<OutputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_unix: Option<u64>,
}

/// Write all artifacts sorted by path, then the manifest naming them.
pub fn finish(ctx: &Ctx, command: &str, mut artifacts: Vec<Artifact>) -> Result<(), CliError> {
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let mut outputs = Vec::with_capacity(artifacts.len());
    for artifact in &artifacts {
        let full = ctx.out_dir.join(&artifact.path);
        write_atomic(&full, &artifact.bytes)?;
        println!("wrote {}", full.display());
        outputs.push(OutputRecord {
            path: artifact.path.to_string_lossy().into_owned(),
            bytes: artifact.bytes.len() as u64,
            sha256: sha256_hex(&artifact.bytes),
        });
    }
    let manifest = RunManifest {
        command,
        config: &ctx.cfg,
        outputs,
        timestamp_unix: ctx.timestamps.then(|| {
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
        }),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("run manifest serializes");
    bytes.push(b'\n');
    let path = ctx.out_dir.join("run_manifest.json");
    write_atomic(&path, &bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}
