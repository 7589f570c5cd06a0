//! Report bundle: CSV tables, `results.json`, `manifest.json` and, for
//! policy runs, `alerts.log`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::{CliError, Command};

/// Significant digits in CSV numeric fields.
pub const CSV_DIGITS: usize = 12;

/// Scientific notation with [`CSV_DIGITS`] significant digits. Negative zero
/// prints as zero.
pub fn num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{:.*e}", CSV_DIGITS - 1, x)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }
}

/// Everything a command produces before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    pub results: serde_json::Value,
    pub alerts: Option<Vec<String>>,
    /// Property violations; nonempty means a failing exit status.
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// SHA-256 of the compact JSON serialization of `config`.
    pub config_sha256: String,
    pub config: ScenarioConfig,
    pub files: Vec<String>,
    pub findings: Vec<String>,
}

pub fn config_hash(config: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_table(dir: &Path, table: &Table) -> Result<PathBuf, CliError> {
    let path = dir.join(table.file_name());
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Csv {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.clone(),
        message: e.to_string(),
    };
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io(&path))?;
    Ok(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

/// Write the bundle into `dir`, creating it if needed. Returns the manifest.
pub fn write_bundle(dir: &Path, command: Command, config: &ScenarioConfig, report: &Report) -> Result<Manifest, CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = Vec::new();
    for t in &report.tables {
        write_table(dir, t)?;
        files.push(t.file_name());
    }
    write_json(&dir.join("results.json"), &report.results)?;
    files.push("results.json".into());
    if let Some(lines) = &report.alerts {
        let path = dir.join("alerts.log");
        let mut text = lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(&path, text).map_err(io(&path))?;
        files.push("alerts.log".into());
    }
    let manifest = Manifest {
        tool: "slackclear".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.as_str().into(),
        seed: config.seed,
        config_sha256: config_hash(config),
        config: config.clone(),
        files,
        findings: report.findings.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(82.0 / 7.0), "1.17142857143e1");
        assert_eq!(num(4.0), "4.00000000000e0");
        assert_eq!(num(-0.0), "0.00000000000e0");
        assert_eq!(num(-2.5e-7), "-2.50000000000e-7");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn hash_is_stable() {
        let c: ScenarioConfig = crate::config::parse_config(r#"{"entitlements": [1]}"#).unwrap();
        assert_eq!(config_hash(&c), config_hash(&c.clone()));
        assert_eq!(config_hash(&c).len(), 64);
    }
}
