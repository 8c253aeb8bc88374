//! Artifact writing: JSON reports, CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "NLMA_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "nlma-out";

/// `--out`, then the environment, then the config file, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), Path::to_path_buf)
}

/// A rectangular table of numbers and labels.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Collects everything one run writes into its output directory.
pub struct Artifacts {
    dir: PathBuf,
    stem: String,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, stem: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: stem.into(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    fn put(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        fs::write(&path, bytes).map_err(|source| CliError::Write { path: path.clone(), source })?;
        log::info!("wrote {}", path.display());
        self.written.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        Ok(())
    }

    /// `<stem><suffix>.json`, pretty-printed with a trailing newline.
    pub fn json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(self.path(&format!("{suffix}.json")), text.as_bytes())
    }

    /// `<stem><suffix>.csv`.
    pub fn csv(&mut self, suffix: &str, table: &Table) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        self.put(self.path(&format!("{suffix}.csv")), &bytes)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// The manifest is the only artifact carrying wall-clock data.
    pub fn manifest(&self, m: &Manifest) -> Result<()> {
        let mut text = serde_json::to_string_pretty(m)?;
        text.push('\n');
        let path = self.path(".manifest.json");
        fs::write(&path, text).map_err(|source| CliError::Write { path, source })
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: Versions,
    pub exit_code: i32,
    pub runtime_seconds: f64,
    pub stage_runtimes: Vec<f64>,
    pub timestamp_unix: u64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub nlma: &'static str,
    pub nonlocal_ma: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            nlma: env!("CARGO_PKG_VERSION"),
            nonlocal_ma: nonlocal_ma::VERSION,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
