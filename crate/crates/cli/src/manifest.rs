use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tsdist::{Error, Result};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Record of one command run. Holds nothing that varies between identical
/// runs (no timestamps, paths outside the output directory or thread counts).
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn entry(path: &Path) -> Result<FileEntry> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(FileEntry {
        name,
        sha256: sha256_file(path)?,
    })
}

impl RunManifest {
    pub fn new(command: &'static str, config: serde_json::Value) -> Self {
        RunManifest {
            tool: "tsdist",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
        for p in paths {
            self.inputs.push(entry(p)?);
        }
        Ok(())
    }

    pub fn add_outputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
        for p in paths {
            self.outputs.push(entry(p)?);
        }
        Ok(())
    }

    /// Writes `<stem>.manifest.json` into `out`.
    pub fn write(&self, out: &Path, stem: &str) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let path = out.join(format!("{stem}.manifest.json"));
        tsdist::svg::write_atomic(&path, text.as_bytes())
    }
}
