//! The run manifest: every command writes exactly one `manifest.json`
//! recording the command, input hashes, seed, software version, per-phase
//! timings, and convergence/diagnostic summaries, so a run can be
//! reproduced (and checked) from the manifest alone.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// 0 means the default thread pool.
    pub threads: usize,
    pub inputs: BTreeMap<String, FileStamp>,
    pub outputs: BTreeMap<String, String>,
    pub timings_seconds: BTreeMap<String, f64>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot hash {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, threads: usize) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_seconds: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn stamp_input(&mut self, name: &str, path: &Path) -> CliResult<()> {
        self.inputs.insert(
            name.to_string(),
            FileStamp {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            },
        );
        Ok(())
    }

    pub fn stamp_output(&mut self, out_dir: &Path, name: &str) -> CliResult<()> {
        self.outputs
            .insert(name.to_string(), sha256_file(&out_dir.join(name))?);
        Ok(())
    }

    pub fn timing(&mut self, phase: &str, seconds: f64) {
        self.timings_seconds.insert(phase.to_string(), seconds);
    }

    pub fn note(&mut self, key: &str, value: serde_json::Value) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn write(&self, out_dir: &Path) -> CliResult<()> {
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Manifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("bad manifest {}: {e}", path.display())))
    }

    /// Recomputes input hashes and reports mismatches.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for (name, stamp) in &self.inputs {
            let actual = sha256_file(Path::new(&stamp.path))?;
            if actual != stamp.sha256 {
                return Err(CliError::Validation(format!(
                    "input '{name}' ({}) no longer matches its manifest hash",
                    stamp.path
                )));
            }
        }
        Ok(())
    }
}

/// Prepares an output directory. A directory that already holds a manifest
/// is refused unless `force` is set.
pub fn prepare_out_dir(out_dir: &Path, force: bool) -> CliResult<()> {
    if out_dir.join("manifest.json").exists() && !force {
        return Err(CliError::Validation(format!(
            "{} already contains a run (use --force to overwrite)",
            out_dir.display()
        )));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))
}
