//! Artifact directories and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

/// Name of the manifest written into every scenario directory. It is the only
/// file there that does not list itself.
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub reason: String,
}

impl Verdict {
    pub fn check(name: &str, ok: bool, reason: impl Into<String>) -> Self {
        Verdict { name: name.into(), status: if ok { Status::Pass } else { Status::Fail }, reason: reason.into() }
    }

    pub fn inconclusive(name: &str, reason: impl Into<String>) -> Self {
        Verdict { name: name.into(), status: Status::Inconclusive, reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub label: String,
    pub tool_version: String,
    /// The effective configuration as TOML.
    pub config: String,
    pub input_hash: String,
    pub files: Vec<FileEntry>,
    pub wall_seconds: f64,
    pub verdicts: Vec<Verdict>,
    /// Set when the scenario aborted before producing verdicts.
    pub error: Option<String>,
}

impl RunManifest {
    /// PASS only if every verdict passed and nothing failed outright.
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.status == Status::Pass)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under one directory and records their checksums.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    /// Creates (or empties) the directory so that it ends up holding only listed files.
    pub fn create(dir: &Path) -> Result<Self, LabError> {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), LabError> {
        let bytes = contents.as_ref();
        if name == MANIFEST || self.files.iter().any(|f| f.path == name) {
            return Err(LabError::Config(format!("artifact '{name}' written twice")));
        }
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), LabError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Config(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest, LabError> {
        manifest.files = self.files;
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Config(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

/// Checks that every file in `dir` except the manifest is listed with a matching checksum.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, LabError> {
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?).map_err(|e| LabError::Config(e.to_string()))?;
    let mut problems = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name == MANIFEST {
            continue;
        }
        match manifest.files.iter().find(|f| f.path == name) {
            None => problems.push(format!("{name}: not in manifest")),
            Some(f) => {
                if sha256_hex(&fs::read(dir.join(&name))?) != f.sha256 {
                    problems.push(format!("{name}: checksum mismatch"));
                }
            }
        }
    }
    for f in &manifest.files {
        if !dir.join(&f.path).exists() {
            problems.push(format!("{}: listed but missing", f.path));
        }
    }
    Ok(problems)
}
