use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, PipelineConfig, PipelineError};
use crate::hash::sha256_hex;

pub const RUN_SUMMARY: &str = "run_summary.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Inventory of an output directory after a subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub backend: String,
    pub files: Vec<FileRecord>,
}

impl RunSummary {
    pub fn collect(
        root: &Path,
        command: &str,
        cfg: &PipelineConfig,
        backend: &str,
    ) -> Result<Self, PipelineError> {
        let mut paths = Vec::new();
        walk(root, root, &mut paths)?;
        paths.sort();
        let files = crate::par::map(&paths, |rel| {
            let full = root.join(rel);
            std::fs::read(&full)
                .map(|b| FileRecord {
                    path: rel.clone(),
                    bytes: b.len() as u64,
                    sha256: sha256_hex(&b),
                })
                .map_err(|e| io_err(&full, e))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            command: command.to_owned(),
            seed: cfg.seed,
            config_hash: cfg.content_hash(),
            backend: backend.to_owned(),
            files,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    pub fn file(&self, rel: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == rel)
    }
}

pub fn read_run_summary(path: &Path) -> Result<RunSummary, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), PipelineError> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        let kind = entry.file_type().map_err(|e| io_err(&path, e))?;
        if kind.is_dir() {
            walk(root, &path, out)?;
        } else if kind.is_file() {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let rel: Vec<String> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let rel = rel.join("/");
            if rel != RUN_SUMMARY {
                out.push(rel);
            }
        }
    }
    Ok(())
}
