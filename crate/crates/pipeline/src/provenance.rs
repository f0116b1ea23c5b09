//! `stage.json` records: config hash, seed, timing, input and output digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

pub const STAGE_FILE: &str = "stage.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Paths relative to the output root.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file below `dir`, sorted, relative to `root`.
pub fn list_files(dir: &Path, root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| PipelineError::io(&d, e))?;
        for e in entries {
            let p = e.map_err(|e| PipelineError::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn key(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Digest each listed path (files or directories) under `root`.
pub fn digest_paths(root: &Path, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for rel in paths {
        let abs = root.join(rel);
        if abs.is_dir() {
            for f in list_files(&abs, root)? {
                if f.file_name().is_some_and(|n| n == STAGE_FILE) {
                    continue;
                }
                out.insert(key(&f), hash_file(&root.join(&f))?);
            }
        } else if abs.is_file() {
            out.insert(key(rel), hash_file(&abs)?);
        } else {
            return Err(PipelineError::io(&abs, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
        }
    }
    Ok(out)
}

impl StageRecord {
    pub fn path(stage_dir: &Path) -> PathBuf {
        stage_dir.join(STAGE_FILE)
    }

    pub fn read(stage_dir: &Path) -> Result<Option<Self>> {
        let p = Self::path(stage_dir);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        let rec = serde_json::from_str(&text).map_err(|e| PipelineError::Provenance { path: p, reason: e.to_string() })?;
        Ok(Some(rec))
    }

    pub fn write(&self, stage_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(stage_dir).map_err(|e| PipelineError::io(stage_dir, e))?;
        let p = Self::path(stage_dir);
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        std::fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))
    }

    /// Recompute every recorded output digest.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for (rel, want) in &self.outputs {
            let p = root.join(rel);
            if !p.is_file() {
                return Err(PipelineError::Provenance { path: p, reason: "recorded output is missing".into() });
            }
            let got = hash_file(&p)?;
            if &got != want {
                return Err(PipelineError::Provenance { path: p, reason: format!("digest {got} differs from recorded {want}") });
            }
        }
        Ok(())
    }
}

/// What to do with a stage whose directory may already hold results.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Run,
    Skip,
}

/// Skip when config and inputs match and the outputs still verify; refuse
/// when the recorded config differs, unless `force`.
pub fn decide(
    stage: &str,
    stage_dir: &Path,
    root: &Path,
    config_hash: &str,
    inputs: &BTreeMap<String, String>,
    force: bool,
) -> Result<Decision> {
    let Some(rec) = StageRecord::read(stage_dir)? else {
        return Ok(Decision::Run);
    };
    if force {
        return Ok(Decision::Run);
    }
    if rec.config_hash != config_hash {
        return Err(PipelineError::ConfigHashMismatch {
            stage: stage.into(),
            recorded: rec.config_hash,
            current: config_hash.into(),
        });
    }
    if &rec.inputs != inputs {
        log::info!("{stage}: upstream inputs changed, rerunning");
        return Ok(Decision::Run);
    }
    if let Err(e) = rec.verify(root) {
        log::warn!("{stage}: {e}; rerunning");
        return Ok(Decision::Run);
    }
    Ok(Decision::Skip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(hash_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn decide_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let sd = root.join("s");
        std::fs::create_dir_all(&sd).unwrap();
        std::fs::write(sd.join("out.bin"), b"1").unwrap();
        let inputs = BTreeMap::new();
        assert_eq!(decide("s", &sd, root, "h", &inputs, false).unwrap(), Decision::Run);
        let rec = StageRecord {
            stage: "s".into(),
            config_hash: "h".into(),
            seed: None,
            started_unix: 0.0,
            finished_unix: 0.0,
            inputs: inputs.clone(),
            outputs: digest_paths(root, &[PathBuf::from("s")]).unwrap(),
        };
        rec.write(&sd).unwrap();
        assert_eq!(rec.outputs.len(), 1);
        assert_eq!(decide("s", &sd, root, "h", &inputs, false).unwrap(), Decision::Skip);
        assert!(matches!(decide("s", &sd, root, "other", &inputs, false), Err(PipelineError::ConfigHashMismatch { .. })));
        assert_eq!(decide("s", &sd, root, "other", &inputs, true).unwrap(), Decision::Run);
        std::fs::write(sd.join("out.bin"), b"2").unwrap();
        assert!(rec.verify(root).is_err());
        assert_eq!(decide("s", &sd, root, "h", &inputs, false).unwrap(), Decision::Run);
    }
}
