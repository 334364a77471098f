//! Output bookkeeping: every file a run writes is registered, checksummed and
//! listed in `manifest.json`; anything else in the directory is an orphan.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub estimated_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files of one run inside its output directory.
pub struct OutputSet {
    root: PathBuf,
    files: Vec<String>,
    pub warnings: Vec<String>,
    started: Instant,
    started_unix: u64,
}

impl OutputSet {
    /// Prepares `root`. A directory holding a previous manifest is cleared of
    /// the files that manifest lists; any other content is refused.
    pub fn prepare(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        let previous = root.join(MANIFEST_NAME);
        if previous.exists() {
            let old: RunManifest = serde_json::from_slice(&fs::read(&previous)?)
                .map_err(|e| CliError::Usage(format!("unreadable manifest in {}: {e}", root.display())))?;
            for entry in &old.outputs {
                let p = root.join(&entry.path);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
            fs::remove_file(previous)?;
        }
        let leftover = list_files(root)?;
        if !leftover.is_empty() {
            return Err(CliError::Usage(format!(
                "output directory {} holds files from outside a run: {}",
                root.display(),
                leftover.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            warnings: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates `name` (relative, `/`-separated) and registers it.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        if self.files.iter().any(|f| f == name) || name == MANIFEST_NAME {
            return Err(CliError::Integrity(format!("output {name} written twice")));
        }
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    /// Writes a whole file through a closure.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        eprintln!("warning: {m}");
        self.warnings.push(m);
    }

    /// Checksums every output, writes the manifest and verifies that the
    /// directory holds nothing else.
    pub fn finish(self, command: &str, config: &RunConfig, estimated_seconds: f64) -> Result<RunManifest> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let bytes = fs::read(self.root.join(name))?;
            outputs.push(OutputEntry { path: name.clone(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config.to_json().as_bytes()),
            config: config.clone(),
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            estimated_seconds,
            outputs,
            warnings: self.warnings,
        };
        fs::write(self.root.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
        self_check(&self.root)?;
        Ok(manifest)
    }
}

/// Relative paths of all regular files under `root`, `/`-separated.
fn list_files(root: &Path) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root");
                let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.insert(parts.join("/"));
            }
        }
    }
    Ok(out)
}

/// Verifies that `root` holds exactly the manifest and the files it lists,
/// with matching checksums.
pub fn self_check(root: &Path) -> Result<()> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(root.join(MANIFEST_NAME))?)?;
    let mut present = list_files(root)?;
    present.remove(MANIFEST_NAME);
    for entry in &manifest.outputs {
        if !present.remove(&entry.path) {
            return Err(CliError::Integrity(format!("missing output {}", entry.path)));
        }
        let bytes = fs::read(root.join(&entry.path))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CliError::Integrity(format!("checksum mismatch for {}", entry.path)));
        }
    }
    if !present.is_empty() {
        return Err(CliError::Integrity(format!(
            "orphan files: {}",
            present.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}
