//! Output files: long-format CSV for datasets, JSON for reports and the run
//! manifest.

use std::fs;
use std::path::{Path, PathBuf};

use qmetro_core::experiment::{FringeDataset, FringePoint};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Bumped whenever a CSV column set or a JSON field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const DATASET_COLUMNS: [&str; 8] =
    ["delta_omega_over_omega0", "sigma_z_mean", "sigma_z_exact", "n0", "n1", "losses", "leakage", "seed"];

pub fn dataset_row(p: &FringePoint, seed: u64) -> Vec<String> {
    vec![
        p.delta_omega_over_omega0.to_string(),
        p.sigma_z_mean.to_string(),
        p.sigma_z_exact.to_string(),
        p.n0.to_string(),
        p.n1.to_string(),
        p.losses.to_string(),
        p.leakage.to_string(),
        seed.to_string(),
    ]
}

pub fn write_dataset(path: &Path, d: &FringeDataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DATASET_COLUMNS)?;
    for p in &d.points {
        w.write_record(dataset_row(p, d.config.seed))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Write through a temporary file so an interrupted run never leaves a torn
/// checkpoint behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config_path: Option<String>,
    /// Resolved configuration; re-running it with the same seed reproduces
    /// every output.
    pub config: toml::Value,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub status: RunStatus,
    pub wall_clock_s: f64,
    /// Work items evaluated (repetitions, scan points, gate records, cells).
    pub steps: u64,
    #[serde(default)]
    pub errors: Vec<String>,
    /// Sweep checkpoints: indices of finished cells.
    #[serde(default)]
    pub completed_cells: Vec<usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.resolved.toml";

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, config: toml::Value, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            config,
            seed,
            outputs: Vec::new(),
            status: RunStatus::Complete,
            wall_clock_s: 0.0,
            steps: 0,
            errors: Vec::new(),
            completed_cells: Vec::new(),
        }
    }

    pub fn add_output(&mut self, out_dir: &Path, path: &Path) {
        let rel = path.strip_prefix(out_dir).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    pub fn save(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn load(out_dir: &Path) -> Result<Option<Self>, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

/// File-name friendly rendering of a parameter value.
pub fn tag_value(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m").replace('.', "p")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags() {
        assert_eq!(tag_value(0.95), "0p95");
        assert_eq!(tag_value(-1.5), "m1p5");
        assert_eq!(tag_value(0.0), "0");
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("sweep", None, toml::Value::Table(Default::default()), 3);
        m.completed_cells = vec![0, 2];
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), Some(m));
    }
}
