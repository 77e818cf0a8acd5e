//! Stage manifests: which configuration produced a directory, and the
//! digest of every file in it. No timestamps, so reruns are byte-identical.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::config::hex;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Stage-specific counts and settings.
    pub details: Value,
    pub files: Vec<FileEntry>,
}

pub fn file_digest(path: &Path) -> CliResult<FileEntry> {
    let data = std::fs::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(FileEntry {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        bytes: data.len() as u64,
        sha256: hex(&Sha256::digest(&data)),
    })
}

impl Manifest {
    /// Digests `files` (names relative to `dir`, sorted) and writes the
    /// manifest into `dir`.
    pub fn write(
        dir: &Path,
        stage: &str,
        config_hash: String,
        master_seed: u64,
        details: Value,
        files: &[String],
    ) -> CliResult<Manifest> {
        let mut names = files.to_vec();
        names.sort();
        names.dedup();
        let files = names
            .iter()
            .map(|n| {
                let mut e = file_digest(&dir.join(n))?;
                e.name = n.clone();
                Ok(e)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let m = Manifest {
            stage: stage.to_string(),
            config_hash,
            master_seed,
            details,
            files,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(m)
    }

    /// Loads the manifest of an upstream stage and checks it was produced
    /// with the expected configuration. Both failures map to exit code 3.
    pub fn require(dir: &Path, stage: &str, expected_hash: &str) -> CliResult<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::missing(format!(
                "stage `{stage}` has not been run: {} not found",
                path.display()
            ))
        })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| {
            CliError::missing(format!(
                "unreadable manifest {}: {e}; rerun `{stage}`",
                path.display()
            ))
        })?;
        if m.stage != stage {
            return Err(CliError::missing(format!(
                "{} belongs to stage `{}`, expected `{stage}`",
                path.display(),
                m.stage
            )));
        }
        if m.config_hash != expected_hash {
            return Err(CliError::missing(format!(
                "outputs of `{stage}` in {} were produced with a different configuration \
                 (hash {} vs {expected_hash}); rerun `{stage}`",
                dir.display(),
                short(&m.config_hash)
            )));
        }
        Ok(m)
    }

    /// Recomputes file digests and reports the first file that changed.
    pub fn verify_files(&self, dir: &Path) -> CliResult<()> {
        for f in &self.files {
            let now = file_digest(&dir.join(&f.name)).map_err(|_| {
                CliError::missing(format!(
                    "{} listed in the `{}` manifest is missing",
                    f.name, self.stage
                ))
            })?;
            if now.sha256 != f.sha256 {
                return Err(CliError::missing(format!(
                    "{} changed since `{}` wrote it; rerun `{}`",
                    dir.join(&f.name).display(),
                    self.stage,
                    self.stage
                )));
            }
        }
        Ok(())
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}
