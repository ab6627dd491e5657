use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
    /// Inputs and outputs, path → sha256.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Tracks files written by a command so the manifest can hash them.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    written: Vec<String>,
    inputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("creating {}: {e}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            inputs: Vec::new(),
            notes: Vec::new(),
        })
    }

    /// Path for a new artifact, recorded for hashing.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn create(&mut self, name: &str) -> anyhow::Result<std::io::BufWriter<fs::File>> {
        let p = self.path(name);
        let f = fs::File::create(&p).map_err(|e| anyhow::anyhow!("creating {}: {e}", p.display()))?;
        Ok(std::io::BufWriter::new(f))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        use std::io::Write;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn finish(self, command: &str, cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
        let mut artifacts = BTreeMap::new();
        for name in &self.written {
            artifacts.insert(name.clone(), sha256_file(&self.dir.join(name))?);
        }
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg,
            inputs,
            artifacts,
            notes: self.notes,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(path)
    }
}
