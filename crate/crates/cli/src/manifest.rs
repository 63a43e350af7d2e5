//! The `<output>.manifest.json` record written beside every command's outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    /// Every flag after defaults and config-file values were applied.
    pub flags: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &'static str, flags: &impl Serialize, seed: Option<u64>, config: Option<&Path>) -> Result<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config: config.map(Path::to_path_buf),
            flags: serde_json::to_value(flags)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write(&self, primary: &Path) -> Result<PathBuf> {
        let path = sibling(primary, "manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `path` with `.suffix` appended to its full file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
