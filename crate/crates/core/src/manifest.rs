//! Run manifests written next to every artifact.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub wall_clock_ms: u128,
}

/// Collects manifest fields while a command runs.
pub struct ManifestBuilder {
    command: String,
    args: Vec<String>,
    config_path: Option<String>,
    seed: Option<u64>,
    outputs: Vec<String>,
    started_unix_ms: u128,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, args: Vec<String>) -> Self {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis());
        ManifestBuilder {
            command: command.into(),
            args,
            config_path: None,
            seed: None,
            outputs: Vec::new(),
            started_unix_ms,
            clock: Instant::now(),
        }
    }

    pub fn config_path(mut self, path: &Path) -> Self {
        self.config_path = Some(path.display().to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            command: self.command,
            args: self.args,
            config_path: self.config_path,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: self.outputs,
            started_unix_ms: self.started_unix_ms,
            wall_clock_ms: self.clock.elapsed().as_millis(),
        }
    }
}

/// `<artifact>.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/w.json")), PathBuf::from("out/w.json.manifest.json"));
    }

    #[test]
    fn builder_records_fields() {
        let mut b = ManifestBuilder::start("gen", vec!["--seed".into()]).seed(3);
        b.output(Path::new("a.json"));
        let m = b.finish();
        assert_eq!(m.seed, Some(3));
        assert_eq!(m.outputs, vec!["a.json".to_string()]);
        assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
    }
}
