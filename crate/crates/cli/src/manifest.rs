//! Every command writes a manifest before doing any work, so a run can be
//! reproduced from the manifest alone and every output file is accounted
//! for in exactly one place.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub fn version_string() -> String {
    format!("plmr {} ({})", env!("CARGO_PKG_VERSION"), env!("PLMR_GIT_DESCRIBE"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration of the run, inlined.
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: u64,
        outputs: Vec<PathBuf>,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: version_string(),
            outputs,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Write to `<dir>/manifest.json`, creating the directory first.
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
