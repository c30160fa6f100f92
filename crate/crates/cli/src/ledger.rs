//! Experiment ledger: per-stage completion records with content digests of
//! the stage's config subsection, inputs, and outputs. A stage is up to date
//! only when all three match; downstream stages refuse to run against
//! predecessors whose outputs no longer match their recorded digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_digest: String,
    pub input_digest: String,
    pub output_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ledger {
    pub tool_version: String,
    pub entries: BTreeMap<String, StageEntry>,
}

impl Ledger {
    fn current_version() -> String {
        env!("CARGO_PKG_VERSION").to_string()
    }

    /// Load the ledger, or start a fresh one. A version change invalidates
    /// all entries.
    pub fn load(out: &Path) -> Result<Ledger, CliError> {
        let path = out.join("ledger.json");
        if !path.exists() {
            return Ok(Ledger {
                tool_version: Self::current_version(),
                entries: BTreeMap::new(),
            });
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let ledger: Ledger = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("malformed ledger {}: {e}", path.display())))?;
        if ledger.tool_version != Self::current_version() {
            log::warn!(
                "ledger written by version {}, current {}; discarding entries",
                ledger.tool_version,
                Self::current_version()
            );
            return Ok(Ledger {
                tool_version: Self::current_version(),
                entries: BTreeMap::new(),
            });
        }
        Ok(ledger)
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        let path = out.join("ledger.json");
        let text = serde_json::to_string_pretty(self).expect("ledger serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn get(&self, stage: &str) -> Option<&StageEntry> {
        self.entries.get(stage)
    }

    pub fn put(&mut self, stage: &str, entry: StageEntry) {
        self.entries.insert(stage.to_string(), entry);
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Digest of any serializable value through its canonical JSON form.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    digest_bytes(serde_json::to_string(value).expect("value serializes").as_bytes())
}

/// Digest of a directory tree: sorted relative paths and file contents.
/// Missing directories digest to a marker so "not yet produced" is distinct
/// from "empty".
pub fn digest_tree(root: &Path) -> Result<String, CliError> {
    if !root.exists() {
        return Ok("absent".to_string());
    }
    let mut files: Vec<PathBuf> = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(root).expect("collected under root");
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex(&hasher.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Digest of a single file.
pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_digest_tracks_content_and_names() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("a")).unwrap();
        fs::write(dir.path().join("a/x.txt"), b"hello").unwrap();
        let d1 = digest_tree(dir.path()).unwrap();
        assert_eq!(d1, digest_tree(dir.path()).unwrap());
        fs::write(dir.path().join("a/x.txt"), b"hellp").unwrap();
        assert_ne!(d1, digest_tree(dir.path()).unwrap());
        fs::write(dir.path().join("a/x.txt"), b"hello").unwrap();
        assert_eq!(d1, digest_tree(dir.path()).unwrap());
        fs::write(dir.path().join("a/y.txt"), b"").unwrap();
        assert_ne!(d1, digest_tree(dir.path()).unwrap());
    }

    #[test]
    fn absent_tree_is_distinct_from_empty() {
        let dir = tempfile::tempdir().unwrap();
        let missing = digest_tree(&dir.path().join("nope")).unwrap();
        let empty = digest_tree(dir.path()).unwrap();
        assert_ne!(missing, empty);
    }

    #[test]
    fn ledger_round_trip_and_version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let mut ledger = Ledger::load(dir.path()).unwrap();
        ledger.put(
            "synth",
            StageEntry {
                config_digest: "c".into(),
                input_digest: "i".into(),
                output_digest: "o".into(),
            },
        );
        ledger.save(dir.path()).unwrap();
        let back = Ledger::load(dir.path()).unwrap();
        assert_eq!(back.get("synth"), ledger.get("synth"));

        // Different tool version discards entries.
        let mut stale = back.clone();
        stale.tool_version = "0.0.0-other".into();
        stale.save(dir.path()).unwrap();
        let fresh = Ledger::load(dir.path()).unwrap();
        assert!(fresh.entries.is_empty());
    }
}
