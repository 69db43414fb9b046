//! Run manifests and digest-tracked output directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use coevo_core::CoevoError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run. Contains no timestamps or output
/// locations, so repeating a run rewrites it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    /// Flag overrides applied on top of the configuration file.
    pub overrides: Vec<String>,
    /// Fixed method variants that affect the outputs.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub methods: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            overrides: Vec::new(),
            methods: BTreeMap::new(),
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("read manifest {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CoevoError::config(format!("{}: {e}", path.display())))?;
        Ok(m)
    }

    /// Checks that the manifest was written by `command` and that its inputs
    /// still have the recorded digests.
    pub fn check_replay(&self, command: &str) -> Result<()> {
        if self.command != command {
            return Err(CoevoError::config(format!(
                "manifest was written by `{}`, not `{command}`",
                self.command
            ))
            .into());
        }
        for input in &self.inputs {
            let actual = path_digest(Path::new(&input.path))?;
            if actual != input.sha256 {
                return Err(CoevoError::invalid(format!(
                    "input {} changed since the manifest was written",
                    input.path
                ))
                .into());
            }
        }
        Ok(())
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn with_method(mut self, key: &str, value: &str) -> Self {
        self.methods.insert(key.to_owned(), value.to_owned());
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text.into_bytes()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of a file, or for a directory one digest over every file below
/// it (manifests excluded), in path order.
pub fn path_digest(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return file_digest(path);
    }
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, String)>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("list {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            let is_manifest = p
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(MANIFEST_NAME));
            if p.is_dir() {
                walk(&p, base, out)?;
            } else if !is_manifest {
                let rel = p.strip_prefix(base).unwrap_or(&p).display().to_string();
                out.push((rel, file_digest(&p)?));
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(path, path, &mut files)?;
    let listing: String = files.iter().map(|(p, d)| format!("{d}  {p}\n")).collect();
    Ok(sha256_hex(listing.as_bytes()))
}

/// Output directory that only accepts plain relative file names and keeps
/// the digest of everything written to it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("create {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves `name` inside the directory, refusing anything that could
    /// escape it.
    pub fn path_of(&self, name: &str) -> Result<PathBuf> {
        let rel = Path::new(name);
        if name.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            bail!(CoevoError::invalid(format!(
                "output name `{name}` is not a plain relative path"
            )));
        }
        Ok(self.root.join(rel))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path_of(name)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("write {}", path.display()))?;
        self.written.retain(|f| f.path != name);
        self.written.push(FileDigest {
            path: name.to_owned(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Records files written into the directory by other means, in path order.
    pub fn record_tree(&mut self) -> Result<()> {
        fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
            for e in fs::read_dir(dir).with_context(|| format!("list {}", dir.display()))? {
                let p = e?.path();
                if p.is_dir() {
                    walk(&p, out)?;
                } else {
                    out.push(p);
                }
            }
            Ok(())
        }
        let mut files = Vec::new();
        walk(&self.root, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(&self.root).unwrap_or(&f);
            let name = rel.to_string_lossy().replace('\\', "/");
            if name == MANIFEST_NAME || self.written.iter().any(|w| w.path == name) {
                continue;
            }
            self.written.push(FileDigest {
                path: name,
                sha256: file_digest(&f)?,
            });
        }
        Ok(())
    }

    /// Records the outputs in `manifest` and writes it as `name`.
    pub fn finish(mut self, mut manifest: RunManifest, name: &str) -> Result<RunManifest> {
        manifest.outputs = std::mem::take(&mut self.written);
        let path = self.path_of(name)?;
        fs::write(&path, manifest.to_bytes()).with_context(|| format!("write {}", path.display()))?;
        Ok(manifest)
    }
}

/// Splits an output file path into its directory and file name.
pub fn split_out_path(path: &Path) -> Result<(PathBuf, String)> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CoevoError::invalid(format!("bad output path {}", path.display())))?
        .to_owned();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok((dir, name))
}

/// `metrics.csv` → `metrics.manifest.json`.
pub fn sidecar_name(file_name: &str) -> String {
    let stem = Path::new(file_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(file_name);
    format!("{stem}.manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_escaping_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        assert!(out.write("../x.csv", b"1").is_err());
        assert!(out.write("/tmp/x.csv", b"1").is_err());
        out.write("a.csv", b"1").unwrap();
        let m = out
            .finish(RunManifest::new("test", serde_json::Value::Null), "m.json")
            .unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"1"));
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_name("metrics.csv"), "metrics.manifest.json");
        assert_eq!(split_out_path(Path::new("x.csv")).unwrap().0, PathBuf::from("."));
    }
}
