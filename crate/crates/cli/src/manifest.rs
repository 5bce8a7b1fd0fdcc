use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// Everything needed to rerun a command: the resolved configuration, the
/// seed, and SHA-256 digests of the files read and written.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        let digest = hash_path(path)?;
        self.inputs.insert(relative(root, path), digest);
        Ok(())
    }

    pub fn output(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        let digest = hash_path(path)?;
        self.outputs.insert(relative(root, path), digest);
        Ok(())
    }

    /// Writes `manifest-<command>.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// SHA-256 of a file, or of every file below a directory in path order.
pub fn hash_path(path: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    for f in files {
        if path.is_dir() {
            h.update(relative(path, &f).as_bytes());
            h.update([0]);
        }
        let mut bytes = Vec::new();
        std::fs::File::open(&f)
            .and_then(|mut file| file.read_to_end(&mut bytes))
            .map_err(|e| CliError::io(&f, e))?;
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(|e| CliError::io(path, e))? {
            let entry = entry.map_err(|e| CliError::io(path, e))?;
            collect_files(&entry.path(), out)?;
        }
    } else if path.is_file() {
        out.push(path.to_path_buf());
    } else {
        return Err(CliError::Runtime(format!("{} does not exist", path.display())));
    }
    Ok(())
}
