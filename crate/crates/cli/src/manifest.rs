//! Run bookkeeping: input digests, staged outputs and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    /// Resolved settings in the order they were applied.
    pub settings: Vec<(String, String)>,
    pub config_digest: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub elapsed_seconds: f64,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| CliError::runtime(format!("cannot create temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::runtime(format!("cannot rename into {}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Absolute form of a path that may not exist yet.
fn resolved(path: &Path) -> PathBuf {
    if let Ok(p) = fs::canonicalize(path) {
        return p;
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    match (fs::canonicalize(parent), path.file_name()) {
        (Ok(dir), Some(name)) => dir.join(name),
        _ => path.to_path_buf(),
    }
}

/// Collects everything a command reads and writes. Outputs are held in
/// memory and only written by [`Run::commit`], so a failed command leaves
/// no files behind.
pub struct Run {
    command: String,
    args: Vec<String>,
    started_at: DateTime<Utc>,
    clock: Instant,
    settings: Vec<(String, String)>,
    config_digest: Option<String>,
    inputs: Vec<(PathBuf, String)>,
    seeds: BTreeMap<String, u64>,
    outputs: Vec<(PathBuf, Vec<u8>)>,
}

impl Run {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            started_at: Utc::now(),
            clock: Instant::now(),
            settings: Vec::new(),
            config_digest: None,
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        self.note_input(path, &bytes);
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|_| CliError::runtime(format!("{} is not UTF-8 text", path.display())))
    }

    pub fn note_input(&mut self, path: &Path, bytes: &[u8]) {
        let d = sha256_hex(bytes);
        if !self.inputs.iter().any(|(p, h)| p == path && *h == d) {
            self.inputs.push((path.to_path_buf(), d));
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn config_digest(&mut self, digest: String) {
        self.config_digest = Some(digest);
    }

    pub fn stage(&mut self, path: &Path, bytes: Vec<u8>) {
        self.outputs.push((path.to_path_buf(), bytes));
    }

    /// Refuses outputs that would overwrite an input or each other, writes
    /// the outputs, then the manifest.
    pub fn commit(self, manifest_path: Option<&Path>) -> Result<PathBuf, CliError> {
        let ins: Vec<PathBuf> = self.inputs.iter().map(|(p, _)| resolved(p)).collect();
        let mut seen: Vec<PathBuf> = Vec::new();
        for (p, _) in &self.outputs {
            let r = resolved(p);
            if ins.contains(&r) {
                return Err(CliError::usage(format!("output {} would overwrite an input", p.display())));
            }
            if seen.contains(&r) {
                return Err(CliError::usage(format!("output {} given twice", p.display())));
            }
            seen.push(r);
        }
        let manifest_path = match manifest_path {
            Some(p) => p.to_path_buf(),
            None => {
                let first = self
                    .outputs
                    .first()
                    .map(|(p, _)| p.clone())
                    .ok_or_else(|| CliError::runtime("command produced no outputs"))?;
                let mut name = first.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                first.with_file_name(name)
            }
        };
        if ins.contains(&resolved(&manifest_path)) || seen.contains(&resolved(&manifest_path)) {
            return Err(CliError::usage(format!(
                "manifest {} collides with another file of this run",
                manifest_path.display()
            )));
        }

        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (p, bytes) in &self.outputs {
            write_atomic(p, bytes)?;
            outputs.push(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = RunManifest {
            command: self.command,
            args: self.args,
            settings: self.settings,
            config_digest: self.config_digest,
            inputs: self
                .inputs
                .into_iter()
                .map(|(p, sha256)| FileDigest {
                    path: p.display().to_string(),
                    sha256,
                })
                .collect(),
            seeds: self.seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
            outputs,
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        write_atomic(&manifest_path, &json)?;
        Ok(manifest_path)
    }
}
