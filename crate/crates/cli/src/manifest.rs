use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(bytes)) }
    }

    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self::of_bytes(path, &bytes))
    }
}

/// Record of one artifact-producing command. Holds no timestamps, so the
/// same inputs produce the same manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Files a command will write, checked all at once before anything touches
/// the disk so a refused overwrite leaves no partial output.
pub struct Outputs {
    dir: PathBuf,
    force: bool,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: impl Into<PathBuf>, force: bool) -> Self {
        Self { dir: dir.into(), force, files: Vec::new() }
    }


    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) -> PathBuf {
        let path = self.dir.join(name);
        self.files.push((path.clone(), bytes.into()));
        path
    }

    /// Writes every file plus `<command>.manifest.json`; returns the
    /// manifest path.
    pub fn commit(
        mut self,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        inputs: Vec<FileDigest>,
    ) -> Result<PathBuf> {
        let outputs: Vec<FileDigest> = self.files.iter().map(|(p, b)| FileDigest::of_bytes(p, b)).collect();
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs,
            outputs,
        };
        let manifest_path = self.add(&format!("{command}.manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n");
        if !self.force {
            let existing: Vec<String> =
                self.files.iter().filter(|(p, _)| p.exists()).map(|(p, _)| p.display().to_string()).collect();
            if !existing.is_empty() {
                bail!("refusing to overwrite {} (pass --force)", existing.join(", "));
            }
        }
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        for (path, bytes) in &self.files {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(manifest_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_to_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(dir.path(), false);
        out.add("a.txt", "one");
        out.commit("x", 0, serde_json::Value::Null, vec![]).unwrap();

        let mut again = Outputs::new(dir.path(), false);
        again.add("b.txt", "two");
        again.add("a.txt", "three");
        let err = again.commit("x", 0, serde_json::Value::Null, vec![]).unwrap_err().to_string();
        assert!(err.contains("a.txt") && err.contains("--force"), "{err}");
        assert!(!dir.path().join("b.txt").exists());

        let mut forced = Outputs::new(dir.path(), true);
        forced.add("a.txt", "three");
        forced.commit("x", 0, serde_json::Value::Null, vec![]).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.txt")).unwrap(), "three");
    }
}
